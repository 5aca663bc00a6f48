"""Closed-form / root-finding layer for the TPP-FDP trade-off curves.

Supplies the phase boundary epsilon_star(delta), the power limit of l1
regularization u_star_dt, the threshold root t_star(u), the piecewise upper
bound q_upper (soft-threshold piece below the power limit, a Moebius
transformation above it), the two-level (r, w) construction attaining the
Moebius piece, and the region classifier.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .dists import ProblemShape  # noqa: F401  (re-exported for convenience)
from .errors import DomainError
from .normal import Phi, Phi_inv, phi

__all__ = [
    "TradeoffPoint",
    "TwoLevelConstruction",
    "epsilon_star",
    "u_star_dt",
    "t_star",
    "q_lasso",
    "q_upper",
    "mobius_construction",
    "classify_region",
]


@dataclass(frozen=True)
class TradeoffPoint:
    u: float
    q: float

    def __post_init__(self):
        if not (0 <= self.u <= 1 and 0 <= self.q <= 1):
            raise DomainError("trade-off point must lie in [0,1]^2")


@dataclass(frozen=True)
class TwoLevelConstruction:
    r: float
    w: float
    alpha_top: float


def _delta_of_s(s):
    return 2 * phi(s) / (2 * phi(s) + s * (2 * Phi(s) - 1))


def _eps_star_of_s(s):
    return (2 * phi(s) - 2 * s * Phi(-s)) / (2 * phi(s) + s * (2 * Phi(s) - 1))


def epsilon_star(delta):
    """Sparsity threshold of the phase transition; 1.0 when delta >= 1 (none)."""
    if not delta > 0:
        raise DomainError("delta must be positive")
    if delta >= 1:
        return 1.0
    # delta(s) is strictly decreasing on s > 0, from 1 at 0+ to 0 at infinity
    s = brentq(lambda s: _delta_of_s(s) - delta, 1e-9, 60.0, xtol=1e-14)
    return float(_eps_star_of_s(s))


def is_supercritical(shape):
    return shape.delta < 1 and shape.epsilon > epsilon_star(shape.delta)


def u_star_dt(shape):
    """Highest asymptotic TPP of constant-penalty (l1) regularization."""
    es = epsilon_star(shape.delta)
    if shape.delta >= 1 or shape.epsilon <= es:
        return 1.0
    return float(
        1.0
        - (1.0 - shape.delta) * (shape.epsilon - es) / (shape.epsilon * (1.0 - es))
    )


def _t_star_gap(x, u, delta, eps):
    # cross-multiplied form of the defining equation; positive for large x
    num = 2 * (1 - eps) * ((1 + x * x) * Phi(-x) - x * phi(x)) + eps * (1 + x * x) - delta
    den = eps * ((1 + x * x) * (1 - 2 * Phi(-x)) + 2 * x * phi(x))
    return num * (1 - 2 * Phi(-x)) - (1 - u) * den


def t_star(u, shape, xtol=1e-10):
    """Largest positive root of the threshold equation at TPP level u.

    Brackets the largest sign change on a log-spaced scan before bisecting.
    """
    if not 0 <= u < 1 + 1e-12:
        raise DomainError("u must lie in [0, 1]")
    delta, eps = shape.delta, shape.epsilon
    xs = np.logspace(-4, np.log10(40.0), 3000)
    vals = _t_star_gap(xs, u, delta, eps)
    signs = np.sign(vals)
    flips = np.flatnonzero(signs[:-1] != signs[1:])
    if flips.size == 0:
        raise DomainError(
            f"no threshold root at u={u}: TPP level not attainable for this shape"
        )
    i = flips[-1]
    root = brentq(_t_star_gap, xs[i], xs[i + 1], args=(u, delta, eps), xtol=xtol)
    return float(root)


def q_lasso(u, shape):
    """Soft-threshold trade-off value at u (defined up to the power limit)."""
    if u <= 0:
        return 0.0
    t = t_star(u, shape)
    noise = 2 * (1 - shape.epsilon) * Phi(-t)
    return float(noise / (noise + shape.epsilon * u))


def _q_mobius(u, eps, es):
    num = eps * (1 - eps) * u - es * (1 - eps)
    den = eps * (1 - es) * u - es * (1 - eps)
    return num / den


def q_upper(u, shape):
    """Piecewise upper bound: q_lasso below the power limit, Moebius above."""
    if not 0 <= u <= 1 + 1e-12:
        raise DomainError("u must lie in [0, 1]")
    udt = u_star_dt(shape)
    if u <= udt:
        return q_lasso(u, shape)
    es = epsilon_star(shape.delta)
    return float(_q_mobius(u, shape.epsilon, es))


def mobius_construction(u, shape):
    """Two-level construction (r(u), w(u)) attaining the Moebius piece at u.

    Valid for u >= u_star_dt in the supercritical regime; r is the ratio of
    the lower to the upper penalty level, alpha_top the (normalized) upper
    level t_star(u_star_dt).
    """
    udt = u_star_dt(shape)
    if not is_supercritical(shape):
        raise DomainError("two-level construction requires the supercritical regime")
    if u < udt - 1e-12:
        raise DomainError(f"u={u} below the power limit {udt:.6f}")
    u = min(u, 1.0)
    es = epsilon_star(shape.delta)
    eps = shape.epsilon
    t = t_star(udt, shape)
    arg = (2 * eps - es - eps * u) / (2 * (eps - es))
    r = float(Phi_inv(arg) / t)
    if 1.0 - r < 1e-7:
        w = es + 2 * (1 - es) * Phi(-t)  # limit of the bracket as r -> 1
    else:
        bracket = Phi(-t) - r * Phi(-r * t) - (phi(t) - phi(r * t)) / t
        w = es + 2 * (1 - es) / (1 - r) * bracket
    return TwoLevelConstruction(r=r, w=float(w), alpha_top=t)


def classify_region(point, shape, q_lower):
    """Label a (TPP, FDP) point against the bound curves.

    q_lower is a callable u -> lower-bound value (injected from the
    lower-bound pipeline).  Points below it are unachievable; between the
    bounds is undecided; at or above the upper bound the point is achievable,
    by both methods up to the power limit and only by sorted-l1 beyond it.
    """
    lower = q_lower(point.u)
    upper = q_upper(point.u, shape)
    if point.q < lower:
        return "unachievable"
    if point.q < upper:
        return "between_bounds"
    if point.u <= u_star_dt(shape):
        return "lasso_and_slope"
    return "slope_only"
