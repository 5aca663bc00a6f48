"""Lower bound on the trade-off: discretized penalty programs over two-point priors.

For a fixed TPP level u and zero-threshold alpha, the relaxed estimation-error
functional is minimized over nondecreasing penalty functions A(z) >= alpha via
a quadratic program on a uniform z-grid (left-endpoint quadrature, backward-
difference monotonicity constraint), and over signal priors via a grid of
two-point priors (t1, t2) whose masses are pinned by the TPP constraint.
The largest alpha for which some prior keeps the minimum below delta is the
threshold t_star_lower(u), and q_lower(u) follows from the zero-threshold
FDP formula.

An atom at t = infinity (the grid cap) cannot be quadrature'd: its error
contribution is the analytic limit p * (1 + A_end^2) with A_end the top grid
value of the penalty, folded into the quadratic term.
"""

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .errors import ConfigurationError, DomainError
from .normal import Phi, Phi_inv, phi
from .qp import QpInstance, solve_qp_isotonic_fast
from .state_evolution import h_alpha
from .tradeoff import is_supercritical, t_star, u_star_dt

__all__ = [
    "GridConfig",
    "TwoPointPrior",
    "DiscretizedPenalty",
    "two_point_prior",
    "f_alpha",
    "min_f_over_penalty",
    "t_star_lower",
    "q_lower",
    "q_lower_curve",
    "AnalyticPenalty",
    "analytic_penalty_H",
    "f_alpha_quad",
    "u_dagger",
]

_SINGLE_TOL = 1e-12


@dataclass(frozen=True)
class GridConfig:
    """Discretization of the penalty program and the prior grid."""

    dz: float = 0.01
    z_pad: float = 8.0
    t_points: int = 60
    t_min: float = 1e-3
    t_max: float = 12.0
    include_cap: bool = True
    alpha_tol: float = 1e-4
    workers: int = 1

    @classmethod
    def coarse(cls, **kw):
        """CI profile: 5x coarser z-grid, 20 prior grid points."""
        return cls(dz=0.05, t_points=20, **kw)

    def t_grid(self):
        ts = np.geomspace(self.t_min, self.t_max, self.t_points)
        if self.include_cap:
            ts = np.append(ts, np.inf)
        return ts


@dataclass(frozen=True)
class TwoPointPrior:
    """Nonzero-signal prior p1*delta(t1) + p2*delta(t2); t2 may be inf."""

    t1: float
    t2: float
    p1: float
    p2: float

    def __post_init__(self):
        if not (-1e-9 <= self.p1 <= 1 + 1e-9):
            raise DomainError("p1 outside [0, 1]")
        if abs(self.p1 + self.p2 - 1.0) > 1e-9:
            raise DomainError("p1 + p2 must equal 1")


@dataclass
class DiscretizedPenalty:
    """Penalty values A on the grid z = alpha + dz * {0..m}; A nondecreasing, A[0] >= alpha."""

    alpha: float
    grid: np.ndarray
    values: np.ndarray


def two_point_prior(u, alpha, t1, t2):
    """Prior masses pinned by P(|pi* + Z| > alpha) = u, or None if infeasible.

    A pair with h(t1) = h(t2) = u collapses to a single point at t1.
    """
    h1 = 1.0 if math.isinf(t1) else float(h_alpha(t1, alpha))
    h2 = 1.0 if math.isinf(t2) else float(h_alpha(t2, alpha))
    if abs(h1 - h2) < 1e-14:
        if abs(h1 - u) <= _SINGLE_TOL:
            return TwoPointPrior(t1=t1, t2=t2, p1=1.0, p2=0.0)
        return None
    p1 = (u - h2) / (h1 - h2)
    if not -1e-12 <= p1 <= 1 + 1e-12:
        return None
    p1 = min(max(p1, 0.0), 1.0)
    return TwoPointPrior(t1=t1, t2=t2, p1=p1, p2=1.0 - p1)


# ---------------------------------------------------------------------------
# discretized functional and its QP


def _finite_atoms(prior):
    out = []
    for t, p in ((prior.t1, prior.p1), (prior.t2, prior.p2)):
        if p > 0.0:
            out.append((t, p, math.isinf(t)))
    return out


def _grid_points(alpha, prior, cfg):
    t_fin = [t for t, p, inf in _finite_atoms(prior) if not inf]
    z_hi = max([alpha] + t_fin) + cfg.z_pad
    n = int(math.ceil((z_hi - alpha) / cfg.dz)) + 1
    return alpha + cfg.dz * np.arange(n)


def _qp_terms(alpha, prior, shape, z, dz):
    """(q, d, const) so that F_bar = dz*(A'diag(q)A - 2A'd) + const."""
    eps = shape.epsilon
    pz = phi(z)
    q = 2.0 * (1.0 - eps) * pz
    d = 2.0 * (1.0 - eps) * z * pz
    const = dz * float(np.sum(2.0 * (1.0 - eps) * z * z * pz))
    for t, p, inf in _finite_atoms(prior):
        if inf:
            # limit contribution eps*p*(1 + A_end^2)
            q[-1] += eps * p / dz
            const += eps * p
            continue
        pm, pp = phi(z - t), phi(z + t)
        q += eps * p * (pm + pp)
        d += eps * p * ((z - t) * pm + (z + t) * pp)
        const += dz * eps * p * float(np.sum((z - t) ** 2 * pm + (z + t) ** 2 * pp))
        const += eps * p * t * t * float(Phi(alpha - t) - Phi(-alpha - t))
    return q, d, const


def f_alpha(alpha, penalty, prior, shape):
    """Discretized functional F_bar at a given penalty grid function."""
    z = penalty.grid
    a = penalty.values
    if z.size != a.size:
        raise DomainError("penalty grid and values must have equal length")
    dz = float(z[1] - z[0]) if z.size > 1 else 1.0
    q, d, const = _qp_terms(alpha, prior, shape, z, dz)
    return float(dz * (a @ (q * a) - 2.0 * a @ d) + const)


def min_f_over_penalty(alpha, prior, shape, cfg=None):
    """Minimize F_bar over nondecreasing penalties floored at alpha."""
    cfg = cfg or GridConfig()
    z = _grid_points(alpha, prior, cfg)
    q, d, const = _qp_terms(alpha, prior, shape, z, cfg.dz)
    res = solve_qp_isotonic_fast(QpInstance(q=q, d=d, alpha=alpha))
    value = float(2.0 * cfg.dz * res.value + const)
    return value, DiscretizedPenalty(alpha=alpha, grid=z, values=res.minimizer)


# ---------------------------------------------------------------------------
# feasibility scan over the two-point prior grid


class _AlphaScan:
    """Shared per-alpha precomputation for the (t1, t2) feasibility scan.

    The left-endpoint rule carries an O(dz) bias, so each candidate value is
    Richardson-extrapolated from the dz and 2dz grids (the latter is the
    stride-2 subgrid): F ~ 2*F_bar(dz) - F_bar(2dz).
    """

    def __init__(self, u, alpha, shape, cfg):
        self.u, self.alpha, self.shape, self.cfg = u, alpha, shape, cfg
        ts = cfg.t_grid()
        t_match = self._matched_single(u, alpha, ts)
        if t_match is not None:
            ts = np.append(ts, t_match)
        self.ts = ts
        self.t_match = t_match
        finite = ts[np.isfinite(ts)]
        z_hi = max(alpha, finite.max() if finite.size else alpha) + cfg.z_pad
        n = int(math.ceil((z_hi - alpha) / cfg.dz)) + 1
        self.z = alpha + cfg.dz * np.arange(n)
        z = self.z
        eps = shape.epsilon
        pz = phi(z)
        self.q0 = 2.0 * (1.0 - eps) * pz
        self.d0 = 2.0 * (1.0 - eps) * z * pz
        c0 = 2.0 * (1.0 - eps) * z * z * pz
        self.c0 = (np.cumsum(c0), np.cumsum(c0[::2]))
        self.h = np.where(
            np.isinf(ts), 1.0, h_alpha(np.where(np.isinf(ts), 0.0, ts), alpha)
        )
        self._rows = {}

    @staticmethod
    def _matched_single(u, alpha, ts):
        # constant prior t with P(|t + Z| > alpha) = u, when it exists
        lo = float(h_alpha(0.0, alpha))
        if u < lo or u >= 1.0:
            return None
        try:
            return brentq(
                lambda t: h_alpha(t, alpha) - u, 0.0, alpha + 40.0, xtol=1e-12
            )
        except ValueError:
            return None

    def _row(self, i):
        # per-atom K, M, cumulative C rows on the master grid
        if i in self._rows:
            return self._rows[i]
        t = self.ts[i]
        z = self.z
        pm, pp = phi(z - t), phi(z + t)
        k = pm + pp
        m = (z - t) * pm + (z + t) * pp
        c = (z - t) ** 2 * pm + (z + t) ** 2 * pp
        atom = t * t * float(Phi(self.alpha - t) - Phi(-self.alpha - t))
        self._rows[i] = (k, m, (np.cumsum(c), np.cumsum(c[::2])), atom)
        return self._rows[i]

    def _n_points(self, prior):
        t_fin = [t for t, p, inf in _finite_atoms(prior) if not inf]
        z_hi = max([self.alpha] + t_fin) + self.cfg.z_pad
        return min(int(math.ceil((z_hi - self.alpha) / self.cfg.dz)) + 1, self.z.size)

    def _value_on(self, prior, idx_atoms, stride):
        cfg, eps = self.cfg, self.shape.epsilon
        dz = cfg.dz * stride
        n = self._n_points(prior)
        sl = slice(0, n, stride)
        n_sub = len(range(*sl.indices(self.z.size)))
        which = 0 if stride == 1 else 1
        q = self.q0[sl].copy()
        d = self.d0[sl].copy()
        const = dz * self.c0[which][n_sub - 1]
        for i, t, p in idx_atoms:
            if p <= 0.0:
                continue
            if math.isinf(t):
                q[-1] += eps * p / dz
                const += eps * p
                continue
            k, m, c, atom = self._row(i)
            q += eps * p * k[sl]
            d += eps * p * m[sl]
            const += dz * eps * p * c[which][n_sub - 1] + eps * p * atom
        res = solve_qp_isotonic_fast(QpInstance(q=q, d=d, alpha=self.alpha))
        return float(2.0 * dz * res.value + const)

    def f_min(self, prior, idx1, idx2):
        idx_atoms = ((idx1, prior.t1, prior.p1), (idx2, prior.t2, prior.p2))
        fine = self._value_on(prior, idx_atoms, 1)
        half = self._value_on(prior, idx_atoms, 2)
        return 2.0 * fine - half

    def pairs(self):
        """Candidate (i, j) index pairs, likely-feasible ones first."""
        u, h, ts = self.u, self.h, self.ts
        singles = [
            (i, i) for i in range(ts.size) if abs(h[i] - u) <= _SINGLE_TOL
        ]
        cap = []
        if np.isinf(ts).any():
            j = int(np.flatnonzero(np.isinf(ts))[0])
            cap = [
                (i, j)
                for i in range(ts.size)
                if np.isfinite(ts[i]) and h[i] <= u <= 1.0
            ]
        finite = []
        fin_idx = [i for i in range(ts.size) if np.isfinite(ts[i])]
        for a_pos, i in enumerate(fin_idx):
            for j in fin_idx[a_pos + 1 :]:
                lo, hi = sorted((h[i], h[j]))
                if lo <= u <= hi and abs(h[i] - h[j]) >= 1e-14:
                    finite.append((i, j) if h[i] >= h[j] else (j, i))
        # put the matched single (appended last) in front, then inf-or-nothing
        singles.sort(key=lambda ij: -ij[0])
        return singles + cap + finite

    def feasible(self, delta):
        # slack absorbs the O(dz^2) residual left by the extrapolation; erring
        # on the generous side only loosens the bound (still a valid one)
        slack = 0.004 * self.cfg.dz
        best = np.inf
        for i, j in self.pairs():
            prior = two_point_prior(self.u, self.alpha, self.ts[i], self.ts[j])
            if prior is None:
                continue
            val = self.f_min(prior, i, j)
            best = min(best, val)
            if val <= delta + slack:
                return True, best
        return False, best


def _is_feasible(u, alpha, shape, cfg):
    ok, _ = _AlphaScan(u, alpha, shape, cfg).feasible(shape.delta)
    return ok


def t_star_lower(u, shape, cfg=None):
    """sup{alpha : some two-point prior keeps the minimized F_bar <= delta}."""
    cfg = cfg or GridConfig()
    if not 0 <= u <= 1:
        raise DomainError("u must lie in [0, 1]")
    if u == 0.0:
        return np.inf
    alpha_min = max(0.0, float(-Phi_inv(u / 2.0)))
    lo = alpha_min + 1e-5 if alpha_min > 0 else 0.0
    if not _is_feasible(u, lo, shape, cfg):
        raise ConfigurationError(
            f"no feasible prior at the smallest zero-threshold (u={u})"
        )
    hi = lo + 0.5
    while _is_feasible(u, hi, shape, cfg):
        lo = hi
        hi += 0.5
        if hi > alpha_min + 24.0:
            raise ConfigurationError("feasible region appears unbounded in alpha")
    while hi - lo > cfg.alpha_tol:
        mid = 0.5 * (lo + hi)
        if _is_feasible(u, mid, shape, cfg):
            lo = mid
        else:
            hi = mid
    # report the infeasible endpoint: overshooting the sup by at most alpha_tol
    # keeps q_lower on the conservative (valid lower bound) side
    return float(hi)


def q_lower(u, shape, cfg=None):
    """Lower bound on FDP at TPP level u."""
    if u <= 0.0:
        return 0.0
    t = t_star_lower(u, shape, cfg)
    if np.isinf(t):
        return 0.0
    noise = 2.0 * (1.0 - shape.epsilon) * Phi(-t)
    return float(noise / (noise + shape.epsilon * u))


def _curve_task(args):
    u, shape, cfg = args
    t = t_star_lower(u, shape, cfg)
    noise = 2.0 * (1.0 - shape.epsilon) * Phi(-t)
    q = 0.0 if u <= 0 else float(noise / (noise + shape.epsilon * u))
    return u, float(t), q


def q_lower_curve(us, shape, cfg=None, workers=None):
    """(u, t_star_lower, q_lower) rows for a grid of u values."""
    cfg = cfg or GridConfig()
    if workers is None:
        workers = cfg.workers or int(os.environ.get("SLOPE_TRADEOFF_WORKERS", "1"))
    tasks = [(float(u), shape, cfg) for u in us]
    rows = []
    zero = [(u, np.inf, 0.0) for u, _, _ in tasks if u <= 0.0]
    tasks = [t for t in tasks if t[0] > 0.0]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_curve_task, tasks))
    else:
        rows = [_curve_task(t) for t in tasks]
    return sorted(zero + rows)


# ---------------------------------------------------------------------------
# analytic Euler-Lagrange penalty and the exact (quadrature) functional


@dataclass(frozen=True)
class AnalyticPenalty:
    """max(alpha, -H'/H) with H the stationarity kernel of the two-point prior."""

    t1: float
    p1: float
    t2: float
    p2: float
    epsilon: float

    def _hh(self, z):
        z = np.asarray(z, dtype=float)
        eps = self.epsilon
        h = 4.0 * (1.0 - eps) * phi(z)
        hp = -4.0 * (1.0 - eps) * z * phi(z)
        for t, p in ((self.t1, self.p1), (self.t2, self.p2)):
            if p <= 0.0 or math.isinf(t):
                continue
            pm, pp = phi(z - t), phi(z + t)
            h += 2.0 * eps * p * (pm + pp)
            hp += -2.0 * eps * p * ((z - t) * pm + (z + t) * pp)
        return h, hp

    def neg_dlog_h(self, z):
        """-H'(z)/H(z), the unconstrained stationary penalty."""
        h, hp = self._hh(z)
        return -hp / h

    def __call__(self, z, alpha):
        return np.maximum(alpha, self.neg_dlog_h(z))

    def is_nondecreasing(self, alpha, z_hi=None, n=4001, tol=1e-9):
        """Feasibility certificate on [alpha, z_hi]; flagged, never thrown."""
        if z_hi is None:
            t_fin = [t for t, p in ((self.t1, self.p1), (self.t2, self.p2))
                     if p > 0 and not math.isinf(t)]
            z_hi = max([alpha] + t_fin) + 10.0
        zs = np.linspace(alpha, z_hi, n)
        vals = self(zs, alpha)
        return bool(np.all(np.diff(vals) >= -tol))


def analytic_penalty_H(t1, p1, t2, p2, shape):
    """Analytic stationary penalty for a two-point prior (callable + certificate)."""
    return AnalyticPenalty(t1=t1, p1=p1, t2=t2, p2=p2, epsilon=shape.epsilon)


def f_alpha_quad(alpha, penalty_fn, prior, shape, z_hi=None):
    """Exact functional by adaptive quadrature; penalty_fn maps z -> A(z).

    Used for the analytic constructions, where the grid bias of the
    left-endpoint rule would dominate the comparison tolerances.
    """
    eps = shape.epsilon
    atoms = _finite_atoms(prior)
    t_fin = [t for t, p, inf in atoms if not inf]
    if z_hi is None:
        z_hi = max([alpha] + t_fin) + 14.0

    def integrand(z):
        a = penalty_fn(z)
        val = 2.0 * (1.0 - eps) * (z - a) ** 2 * phi(z)
        for t, p, inf in atoms:
            if inf:
                continue
            val += eps * p * ((z - t - a) ** 2 * phi(z - t) + (a - z - t) ** 2 * phi(z + t))
        return val

    total, _ = quad(integrand, alpha, z_hi, limit=400)
    for t, p, inf in atoms:
        if inf:
            total += eps * p * (1.0 + float(penalty_fn(z_hi)) ** 2)
        else:
            total += eps * p * t * t * float(Phi(alpha - t) - Phi(-alpha - t))
    return float(total)


def _constant_prior_t1(u, alpha):
    if u <= float(h_alpha(0.0, alpha)):
        return None
    return brentq(lambda t: h_alpha(t, alpha) - u, 0.0, alpha + 40.0, xtol=1e-13)


def u_dagger(shape, tol=2e-4):
    """Smallest TPP at which the constant-prior analytic construction certifies
    a feasible penalty (F <= delta with a nondecreasing certificate); 1 if none.
    """
    if not is_supercritical(shape):
        return 1.0
    udt = u_star_dt(shape)

    def cond(u):
        try:
            a = t_star(u, shape)
        except DomainError:
            return False
        t1 = _constant_prior_t1(u, a)
        if t1 is None:
            return False
        pen = analytic_penalty_H(t1, 1.0, t1, 0.0, shape)
        if not pen.is_nondecreasing(a):
            return False
        return f_alpha_quad(a, lambda z: pen(z, a),
                            TwoPointPrior(t1=t1, t2=t1, p1=1.0, p2=0.0), shape) <= shape.delta

    hi = udt * (1.0 - 1e-9)
    if not cond(hi):
        return 1.0
    lo = hi
    step = 0.02
    while cond(lo) and lo > step:
        hi = lo
        lo -= step
    if cond(lo):
        return float(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if cond(mid):
            hi = mid
        else:
            lo = mid
    return float(hi)
