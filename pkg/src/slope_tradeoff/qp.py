"""Convex QP  min 0.5*A'QA - A'd  over the monotone chain A_1 >= alpha, A_{i+1} >= A_i.

Two solvers with identical contracts:

* ``solve_qp`` -- a primal active-set method.  The working-set equality
  subproblems pool variables into consecutive blocks (weighted means, or the
  floor value alpha for the block pinned by the first constraint), so each
  iteration is O(m).  Multipliers come from suffix sums of the stationarity
  residual, giving an exact KKT certificate and the dual objective.
* ``solve_qp_isotonic_fast`` -- weighted pool-adjacent-violators on d/Q with
  weights Q, then clamping at the floor alpha.  Clamping at a common lower
  bound preserves optimality of the pooled solution, so no re-pooling beyond
  the clamp is needed.

Agreement of the two is itself a regression test.
"""

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ConvergenceError, DomainError, QpStructureError

__all__ = ["QpInstance", "QpResult", "solve_qp", "solve_qp_isotonic_fast"]

_FEAS_TOL = 1e-11


@dataclass(frozen=True)
class QpInstance:
    """Diagonal quadratic term q > 0, linear term d, floor alpha >= 0."""

    q: np.ndarray
    d: np.ndarray
    alpha: float
    constraint: str = "monotone_chain"

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        d = np.asarray(self.d, dtype=float)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "d", d)
        if q.ndim != 1 or q.shape != d.shape or q.size == 0:
            raise DomainError("q and d must be 1-d vectors of equal length")
        if np.any(q <= 0):
            raise DomainError("Q must be strictly positive (strict convexity)")
        if self.alpha < 0:
            raise DomainError("floor alpha must be nonnegative")

    @property
    def m(self):
        return self.q.size


@dataclass
class QpResult:
    minimizer: np.ndarray
    value: float
    active_set: tuple
    multipliers: np.ndarray = field(repr=False, default=None)
    iterations: int = 0

    def dual_value(self, inst):
        """Lagrangian dual objective at the returned multipliers."""
        x = self.minimizer
        return float(-0.5 * x @ (inst.q * x) + self.multipliers[0] * inst.alpha)


def _objective(inst, x):
    return float(0.5 * x @ (inst.q * x) - x @ inst.d)


def _check_chain(inst):
    if inst.constraint != "monotone_chain":
        raise QpStructureError(f"unsupported constraint structure {inst.constraint!r}")


def _chain_multipliers(inst, x, active):
    """Multipliers from stationarity q_j x_j - d_j = mu_j - mu_{j+1}, mu_m = 0."""
    resid = inst.q * x - inst.d
    mu = np.zeros(inst.m)
    acc = 0.0
    for j in range(inst.m - 1, -1, -1):
        acc += resid[j]
        if active[j]:
            mu[j] = acc
        else:
            acc = 0.0
    return mu


def _solve_working_set(inst, active):
    """Equality-constrained solution: pool consecutive blocks joined by active chain
    constraints; the block containing index 0 is pinned at alpha when the floor is
    active."""
    m = inst.m
    x = np.empty(m)
    start = 0
    for i in range(1, m + 1):
        if i == m or not active[i]:
            block = slice(start, i)
            if start == 0 and active[0]:
                x[block] = inst.alpha
            else:
                x[block] = inst.d[block].sum() / inst.q[block].sum()
            start = i
    return x


def _violations(inst, x):
    g = np.empty(inst.m)
    g[0] = x[0] - inst.alpha
    g[1:] = np.diff(x)
    return g


def solve_qp(inst, tol=1e-10):
    """Primal active-set solve; returns the global minimizer with KKT certificate."""
    _check_chain(inst)
    m = inst.m
    u = inst.d / inst.q
    x = np.maximum.accumulate(np.maximum(u, inst.alpha))
    active = _violations(inst, x) <= _FEAS_TOL

    max_iter = 50 * m + 200
    for it in range(1, max_iter + 1):
        x_hat = _solve_working_set(inst, active)
        g = _violations(inst, x_hat)
        inactive = ~active
        worst = g[inactive].min() if inactive.any() else 0.0
        if worst >= -_FEAS_TOL:
            x = x_hat
            mu = _chain_multipliers(inst, x, active)
            neg = np.flatnonzero(active & (mu < -1e-10))
            if neg.size == 0:
                mu = np.maximum(mu, 0.0)
                return QpResult(
                    minimizer=x,
                    value=_objective(inst, x),
                    active_set=tuple(np.flatnonzero(active)),
                    multipliers=mu,
                    iterations=it,
                )
            # drop the most negative multiplier, lowest index first on ties
            drop = neg[np.argmin(mu[neg])]
            active[drop] = False
            continue
        # step toward x_hat until the first blocking inactive constraint
        d_dir = x_hat - x
        g_now = _violations(inst, x)
        g_dir = np.empty(m)
        g_dir[0] = d_dir[0]
        g_dir[1:] = np.diff(d_dir)
        blocking = np.flatnonzero(inactive & (g_dir < -1e-15))
        steps = -g_now[blocking] / g_dir[blocking]
        steps = np.maximum(steps, 0.0)
        s = min(1.0, steps.min())
        hit = blocking[np.flatnonzero(np.isclose(steps, steps.min(), rtol=1e-9))]
        x = x + s * d_dir
        active[hit.min()] = True
    raise ConvergenceError(f"active-set QP did not terminate in {max_iter} iterations")


@njit(cache=True)
def _weighted_pava_nondecreasing(y, w):
    """Weighted isotonic (nondecreasing) regression by pool-adjacent-violators."""
    n = y.shape[0]
    means = np.empty(n)
    weights = np.empty(n)
    counts = np.empty(n, dtype=np.int64)
    k = 0
    for i in range(n):
        means[k] = y[i]
        weights[k] = w[i]
        counts[k] = 1
        while k > 0 and means[k - 1] >= means[k]:
            tot_w = weights[k - 1] + weights[k]
            means[k - 1] = (means[k - 1] * weights[k - 1] + means[k] * weights[k]) / tot_w
            weights[k - 1] = tot_w
            counts[k - 1] += counts[k]
            k -= 1
        k += 1
    out = np.empty(n)
    pos = 0
    for b in range(k):
        for _ in range(counts[b]):
            out[pos] = means[b]
            pos += 1
    return out


def solve_qp_isotonic_fast(inst):
    """O(m) specialization: weighted PAVA of d/Q with weights Q, floored at alpha."""
    _check_chain(inst)
    iso = _weighted_pava_nondecreasing(inst.d / inst.q, inst.q)
    x = np.maximum(iso, inst.alpha)
    active = _violations(inst, x) <= _FEAS_TOL
    mu = np.maximum(_chain_multipliers(inst, x, active), 0.0)
    return QpResult(
        minimizer=x,
        value=_objective(inst, x),
        active_set=tuple(np.flatnonzero(active)),
        multipliers=mu,
        iterations=1,
    )
