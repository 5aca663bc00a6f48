"""AMP state evolution via the quantile approximation, calibration, and the
asymptotic TPP/FDP/sparsity/MSE functionals.

The expectation E <[prox(Pi + tau Z; A tau) - Pi]^2> is estimated on the
quantile grid of Pi + tau Z: apply the sorted-l1 prox to the grid against the
penalty quantiles, take the prior second moment from the prior quantiles, and
close the cross term with the posterior mean E[Pi | Pi + tau Z = q].
"""

from dataclasses import dataclass

import numpy as np

from . import dists
from .errors import (
    CalibrationInfeasibleError,
    ConvergenceError,
    DomainError,
    NumericalError,
)
from .normal import Phi
from .sorted_l1 import prox, unique_nonzero_magnitudes

__all__ = [
    "SeSolution",
    "se_expectation",
    "solve_state_evolution",
    "calibrate",
    "zero_threshold",
    "tpp_fdp_infinity",
    "sparsity_and_mse",
    "h_alpha",
]

DEFAULT_P = 200_000
_ZERO_TOL = 1e-12


@dataclass
class SeSolution:
    """Fixed point of the state evolution for a (prior, normalized penalty) pair.

    se_value is the normalized error E(Pi, Lambda) = E(eta(pi+Z; A) - pi)^2,
    which satisfies se_value <= delta at any valid fixed point.
    """

    tau: float
    normalized_penalty_quantiles: np.ndarray
    zero_threshold: float
    sparsity: float
    se_value: float
    iterations: int = 0
    p: int = 0
    trace: list = None


def h_alpha(t, alpha):
    """P(|t + Z| > alpha) for scalar or vector t."""
    return Phi(t - alpha) + Phi(-t - alpha)


def _prox_on_grid(q_conv, penalty_quantiles, tau):
    theta = np.sort(tau * penalty_quantiles)[::-1]
    return prox(q_conv, theta)


def _se_terms(prior, penalty_quantiles, tau, p):
    q_conv = dists.quantiles(prior, p, tau=tau)
    g = _prox_on_grid(q_conv, penalty_quantiles, tau)
    post = dists.conditional_expectation(prior, tau, q_conv)
    q_pi = dists.quantiles(prior, p)
    value = (g @ g + q_pi @ q_pi - 2.0 * g @ post) / p
    return value, g, q_conv


def se_expectation(prior, penalty_quantiles, tau, p=None):
    """Quantile estimate of E <[prox(Pi + tau Z; A tau) - Pi]^2>."""
    penalty_quantiles = np.asarray(penalty_quantiles, dtype=float)
    if not tau > 0:
        raise DomainError("tau must be positive")
    if p is None:
        p = penalty_quantiles.size + 1
    elif p != penalty_quantiles.size + 1:
        raise DomainError("penalty quantiles must have length p - 1")
    if p < 100:
        raise DomainError("state-evolution grid needs p >= 100")
    value, _, _ = _se_terms(prior, penalty_quantiles, tau, p)
    if not np.isfinite(value) or value < -1e-9:
        raise NumericalError(
            "non-finite state-evolution expectation",
            diagnostics={"tau": tau, "value": value},
        )
    return max(float(value), 0.0)


def _zero_threshold_from_grid(q_conv, g, tau):
    zero = np.abs(g) <= _ZERO_TOL
    if not zero.any():
        return 0.0
    if zero.all():
        return np.inf
    return float(np.abs(q_conv)[zero].max() / tau)


def solve_state_evolution(
    shape, prior, normalized_penalty, p=DEFAULT_P, rtol=1e-9, max_iter=500
):
    """Iterate tau^2 <- sigma^2 + E/delta from tau0^2 = sigma^2 + E Pi^2/delta.

    The map is monotone, so no damping is applied.  Raises ConvergenceError
    (with the iterate trace) if max_iter is exhausted.
    """
    q_a = dists.quantiles(normalized_penalty, p)
    q_pi = dists.quantiles(prior, p)
    tau2 = shape.sigma2 + (q_pi @ q_pi) / p / shape.delta
    if tau2 <= 0:
        raise DomainError("degenerate start: sigma2 = 0 and E Pi^2 = 0")
    tau2_init = tau2
    trace = [np.sqrt(tau2)]
    for it in range(1, max_iter + 1):
        tau = np.sqrt(tau2)
        value = se_expectation(prior, q_a, tau, p)
        tau2_next = shape.sigma2 + value / shape.delta
        if tau2_next <= 0:
            raise NumericalError("state evolution collapsed to tau = 0")
        if tau2_next > 1e12 * tau2_init:
            raise ConvergenceError(
                "state evolution diverged (no fixed point for this penalty)",
                trace=trace,
            )
        tau_next = np.sqrt(tau2_next)
        trace.append(tau_next)
        if abs(tau_next - tau) < rtol * tau:
            value, g, q_conv = _se_terms(prior, q_a, tau_next, p)
            kappa = float(np.mean(np.abs(g) > _ZERO_TOL))
            alpha = _zero_threshold_from_grid(q_conv, g, tau_next)
            return SeSolution(
                tau=float(tau_next),
                normalized_penalty_quantiles=q_a,
                zero_threshold=alpha,
                sparsity=kappa,
                se_value=float(max(value, 0.0) / tau_next**2),
                iterations=it,
                p=p,
                trace=trace,
            )
        tau2 = tau2_next
    raise ConvergenceError(
        f"state evolution not converged after {max_iter} iterations", trace=trace
    )


def calibrate(shape, prior, normalized_penalty, se):
    """Original-scale penalty: lambda = A * tau * (1 - E||prox||_0^* / n).

    The unique-magnitude expectation is estimated from the prox output on the
    quantile grid; n = delta * p.
    """
    p = se.p or (se.normalized_penalty_quantiles.size + 1)
    q_conv = dists.quantiles(prior, p, tau=se.tau)
    g = _prox_on_grid(q_conv, se.normalized_penalty_quantiles, se.tau)
    # the grid has p - 1 cells, so the unique-count fraction is uniq/(p - 1)
    uniq = unique_nonzero_magnitudes(g)
    factor = se.tau * (1.0 - uniq / (p - 1) / shape.delta)
    if factor < 0:
        raise CalibrationInfeasibleError(
            f"negative penalty scale {factor:.3e}: zero-threshold below alpha_0"
        )
    pen = normalized_penalty
    if isinstance(pen, dists.Constant):
        return dists.Constant(lam=pen.lam * factor)
    if isinstance(pen, dists.TwoLevel):
        return dists.TwoLevel(a=pen.a * factor, b=pen.b * factor, w=pen.w)
    if isinstance(pen, dists.QuantileTable):
        return dists.QuantileTable(
            values=tuple(v * factor for v in pen.values)
        )
    raise DomainError(f"unknown penalty spec {pen!r}")


def zero_threshold(prior, penalty_quantiles, tau, p=None):
    """Zero-threshold alpha: the limiting scalar function vanishes on [-alpha, alpha].

    Computed as the largest |input|/tau quantile mapped to zero by the prox;
    +inf when the estimator is identically zero.
    """
    penalty_quantiles = np.asarray(penalty_quantiles, dtype=float)
    if p is None:
        p = penalty_quantiles.size + 1
    q_conv = dists.quantiles(prior, p, tau=tau)
    g = _prox_on_grid(q_conv, penalty_quantiles, tau)
    return _zero_threshold_from_grid(q_conv, g, tau)


def _tpp_infinity(prior, tau, alpha):
    if np.isinf(alpha):
        return 0.0
    atoms = dists.atoms_of(prior)
    if atoms is not None:
        vals, probs = atoms
        nz = vals != 0.0
        eps = probs[nz].sum()
        if eps == 0.0:
            return 0.0
        return float((probs[nz] / eps) @ h_alpha(np.abs(vals[nz]) / tau, alpha))
    # continuous priors have no mass at zero: average over prior quantiles
    q_star = dists.quantiles(prior, 20_001)
    return float(np.mean(h_alpha(np.abs(q_star) / tau, alpha)))


def tpp_fdp_infinity(shape, prior, se):
    """(TPP_inf, FDP_inf) from the zero-threshold formulas; 0/0 taken as 0."""
    alpha = se.zero_threshold
    eps = dists.nonzero_fraction(prior)
    if eps <= 0:
        raise DomainError("prior has no signal mass")
    tpp = _tpp_infinity(prior, se.tau, alpha)
    noise_mass = 2.0 * (1.0 - eps) * Phi(-alpha) if np.isfinite(alpha) else 0.0
    denom = noise_mass + eps * tpp
    fdp = 0.0 if denom == 0.0 else noise_mass / denom
    return float(tpp), float(fdp)


def sparsity_and_mse(shape, prior, se):
    """Asymptotic sparsity kappa and MSE = delta * (tau^2 - sigma^2)."""
    mse = shape.delta * (se.tau**2 - shape.sigma2)
    return float(se.sparsity), float(max(mse, 0.0))
