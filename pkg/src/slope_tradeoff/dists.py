"""Signal priors, penalty distributions, quantiles, and conditional expectations.

Priors are finite point mixtures, Gaussians, exponentials, or the three-point
mixture {M, 1/M, 0}.  Penalties are a constant level, a two-level sequence,
or an explicit nonincreasing quantile table.  Quantiles of the Gaussian
convolution prior + tau*Z come from closed-form CDFs inverted by bisection.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ResolutionError
from .normal import Phi, Phi_inv, mills_ratio_lower

__all__ = [
    "ProblemShape",
    "PointMixture",
    "Gaussian",
    "Exponential",
    "ThreePoint",
    "Constant",
    "TwoLevel",
    "QuantileTable",
    "atoms_of",
    "nonzero_fraction",
    "second_moment",
    "quantiles",
    "conditional_expectation",
    "sample",
    "penalty_sequence",
    "spec_to_dict",
    "spec_from_dict",
    "spec_to_json",
    "spec_from_json",
]

_PROB_TOL = 1e-12


@dataclass(frozen=True)
class ProblemShape:
    """Asymptotic regime: sampling ratio delta = n/p, sparsity epsilon, noise sigma^2."""

    delta: float
    epsilon: float
    sigma2: float = 1.0

    def __post_init__(self):
        if not self.delta > 0:
            raise DomainError("delta must be positive")
        if not 0 < self.epsilon < 1:
            raise DomainError("epsilon must lie in (0, 1)")
        if self.sigma2 < 0:
            raise DomainError("sigma2 must be nonnegative")


# ---------------------------------------------------------------------------
# prior specs


@dataclass(frozen=True)
class PointMixture:
    """Finite mixture of point masses; atoms is a tuple of (value, prob)."""

    atoms: tuple

    def __post_init__(self):
        atoms = tuple((float(a), float(pr)) for a, pr in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        probs = np.array([pr for _, pr in atoms])
        if np.any(probs < 0) or np.any(probs > 1):
            raise DomainError("atom probabilities must lie in [0, 1]")
        if abs(probs.sum() - 1.0) > _PROB_TOL:
            raise DomainError(f"atom probabilities sum to {probs.sum()}, not 1")


@dataclass(frozen=True)
class Gaussian:
    mu: float
    var: float

    def __post_init__(self):
        if self.var < 0:
            raise DomainError("variance must be nonnegative")


@dataclass(frozen=True)
class Exponential:
    """Exponential with rate c (mean 1/c)."""

    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise DomainError("rate must be positive")


@dataclass(frozen=True)
class ThreePoint:
    """Mixture {M w.p. eps*eps_prime, 1/M w.p. eps*(1-eps_prime), 0 w.p. 1-eps}."""

    m: float
    eps: float
    eps_prime: float

    def __post_init__(self):
        if not self.m > 0:
            raise DomainError("m must be positive")
        if not 0 < self.eps < 1:
            raise DomainError("eps must lie in (0, 1)")
        if not 0 <= self.eps_prime <= 1:
            raise DomainError("eps_prime must lie in [0, 1]")

    def as_point_mixture(self):
        return PointMixture(
            atoms=(
                (self.m, self.eps * self.eps_prime),
                (1.0 / self.m, self.eps - self.eps * self.eps_prime),
                (0.0, 1.0 - self.eps),
            )
        )


# ---------------------------------------------------------------------------
# penalty specs


@dataclass(frozen=True)
class Constant:
    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise DomainError("constant penalty level must be positive")


@dataclass(frozen=True)
class TwoLevel:
    """Level a on the top w mass, level b below; a > b >= 0, 0 < w < 1."""

    a: float
    b: float
    w: float

    def __post_init__(self):
        if not self.a > self.b >= 0:
            raise DomainError("two-level penalty requires a > b >= 0")
        if not 0 < self.w < 1:
            raise DomainError("two-level mass w must lie in (0, 1)")


@dataclass(frozen=True)
class QuantileTable:
    """Explicit nonincreasing, nonnegative quantile table (descending)."""

    values: tuple

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size == 0:
            raise DomainError("quantile table must be a nonempty vector")
        if np.any(np.diff(vals) > 1e-12):
            raise DomainError("quantile table must be nonincreasing")
        if np.any(vals < 0) or not np.any(vals > 0):
            raise DomainError("quantile table must be nonnegative, not all zero")
        object.__setattr__(self, "values", tuple(float(v) for v in vals))


_PRIOR_KINDS = (PointMixture, Gaussian, Exponential, ThreePoint)
_PENALTY_KINDS = (Constant, TwoLevel, QuantileTable)


def atoms_of(prior):
    """(values, probs) arrays for discrete priors, None for continuous ones."""
    if isinstance(prior, ThreePoint):
        prior = prior.as_point_mixture()
    if isinstance(prior, Gaussian) and prior.var == 0.0:
        return np.array([prior.mu]), np.array([1.0])
    if isinstance(prior, PointMixture):
        vals = np.array([a for a, _ in prior.atoms])
        probs = np.array([pr for _, pr in prior.atoms])
        return vals, probs
    return None


def nonzero_fraction(prior):
    """P(Pi != 0)."""
    atoms = atoms_of(prior)
    if atoms is None:
        return 1.0
    vals, probs = atoms
    return float(probs[vals != 0.0].sum())


def second_moment(prior):
    """E Pi^2 in closed form."""
    atoms = atoms_of(prior)
    if atoms is not None:
        vals, probs = atoms
        return float(probs @ vals**2)
    if isinstance(prior, Gaussian):
        return prior.var + prior.mu**2
    if isinstance(prior, Exponential):
        return 2.0 / prior.rate**2
    raise DomainError(f"unknown prior spec {prior!r}")


# ---------------------------------------------------------------------------
# quantiles


def _grid(p):
    if p < 2:
        raise ResolutionError("need p >= 2 grid points")
    return np.arange(1, p) / p


def _prior_quantiles(prior, u):
    atoms = atoms_of(prior)
    if atoms is not None:
        vals, probs = atoms
        order = np.argsort(vals)
        vals, probs = vals[order], probs[order]
        cum = np.cumsum(probs)
        idx = np.searchsorted(cum, u, side="left")
        return vals[np.minimum(idx, vals.size - 1)]
    if isinstance(prior, Gaussian):
        return prior.mu + np.sqrt(prior.var) * Phi_inv(u)
    if isinstance(prior, Exponential):
        return -np.log1p(-u) / prior.rate
    raise DomainError(f"unknown prior spec {prior!r}")


def _bisect_quantiles(cdf, u, lo, hi, atol=1e-10):
    lo = np.full_like(u, lo)
    hi = np.full_like(u, hi)
    iters = int(np.ceil(np.log2(max((hi[0] - lo[0]) / atol, 2.0)))) + 2
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        below = cdf(mid) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def _emg_cdf(x, rate, tau):
    # P(Exp(rate) + tau*Z <= x); the exponential correction term uses the
    # erfcx form where v <= 0 (plain exp would overflow) and the direct form
    # where v > 0 (its exponent -c*x + (c*tau)^2/2 is then negative)
    from scipy.special import erfcx

    u = np.asarray(x, dtype=float) / tau
    v = u - rate * tau
    neg = v <= 0
    term = np.empty_like(u)
    term[neg] = 0.5 * erfcx(-v[neg] / np.sqrt(2.0)) * np.exp(-0.5 * u[neg] ** 2)
    pos = ~neg
    term[pos] = np.exp(-rate * tau * u[pos] + 0.5 * (rate * tau) ** 2) * Phi(v[pos])
    return Phi(u) - term


def _conv_quantiles(prior, tau, u):
    """Quantiles of Pi + tau*Z at levels u (ascending)."""
    atoms = atoms_of(prior)
    if atoms is not None:
        vals, probs = atoms
        if vals.size == 1:
            return vals[0] + tau * Phi_inv(u)

        def cdf(x):
            return Phi((x[:, None] - vals[None, :]) / tau) @ probs

        lo = vals.min() - 10.0 * tau
        hi = vals.max() + 10.0 * tau
        scale = max(1.0, np.abs(vals).max(), tau)
        return _bisect_quantiles(cdf, u, lo, hi, atol=1e-10 * scale)
    if isinstance(prior, Gaussian):
        return prior.mu + np.sqrt(prior.var + tau * tau) * Phi_inv(u)
    if isinstance(prior, Exponential):
        hi = -np.log(0.5 / u.size) / prior.rate + 10.0 * tau

        def cdf(x):
            return _emg_cdf(x, prior.rate, tau)

        return _bisect_quantiles(cdf, u, -10.0 * tau, hi, atol=1e-10 * max(1.0, hi))
    raise DomainError(f"unknown prior spec {prior!r}")


def _penalty_quantiles(spec, p):
    n = p - 1
    if isinstance(spec, Constant):
        return np.full(n, spec.lam)
    if isinstance(spec, TwoLevel):
        n_top = int(np.ceil(spec.w * n))
        if n_top >= n or (n_top < 1 and spec.b == 0.0):
            raise ResolutionError(
                f"p={p} too small to resolve two-level penalty with w={spec.w}"
            )
        n_top = max(n_top, 1)
        out = np.full(n, spec.b)
        out[:n_top] = spec.a
        return out
    if isinstance(spec, QuantileTable):
        table = np.asarray(spec.values)
        # table[i] is the quantile at level (i+1)/(len+1); resample by level
        src = np.arange(1, table.size + 1) / (table.size + 1)
        out = np.interp(np.arange(1, p) / p, src, table)
        return np.sort(out)[::-1].copy()
    raise DomainError(f"unknown penalty spec {spec!r}")


def quantiles(spec, p, tau=None):
    """Discretized quantile function at levels {1/p, ..., (p-1)/p}.

    Priors return ascending values, optionally of the convolution Pi + tau*Z.
    Penalties return descending values; tau does not apply.
    """
    if isinstance(spec, _PENALTY_KINDS):
        if tau is not None:
            raise DomainError("tau applies to priors only")
        if p < 2:
            raise ResolutionError("need p >= 2 grid points")
        return _penalty_quantiles(spec, p)
    u = _grid(p)
    if tau is None:
        return _prior_quantiles(spec, u)
    if not tau > 0:
        raise DomainError("tau must be positive")
    return _conv_quantiles(spec, float(tau), u)


# ---------------------------------------------------------------------------
# conditional expectation E[Pi | Pi + tau Z = q]


def conditional_expectation(prior, tau, q):
    """Closed-form posterior mean of the prior given the noisy observation q."""
    if not tau > 0:
        raise DomainError("tau must be positive")
    q = np.asarray(q, dtype=float)
    atoms = atoms_of(prior)
    if atoms is not None:
        vals, probs = atoms
        keep = probs > 0
        vals, probs = vals[keep], probs[keep]
        logw = np.log(probs)[None, :] - (q[..., None] - vals[None, :]) ** 2 / (
            2.0 * tau * tau
        )
        logw -= logw.max(axis=-1, keepdims=True)
        w = np.exp(logw)
        w /= w.sum(axis=-1, keepdims=True)
        return w @ vals
    if isinstance(prior, Gaussian):
        return (q * prior.var + prior.mu * tau * tau) / (prior.var + tau * tau)
    if isinstance(prior, Exponential):
        xi = (q - prior.rate * tau * tau) / tau
        return tau * (xi + mills_ratio_lower(xi))
    raise DomainError(f"unknown prior spec {prior!r}")


# ---------------------------------------------------------------------------
# sampling


def sample(prior, p, seed):
    """p i.i.d. draws, deterministic given the seed (or Generator)."""
    if p < 1:
        raise DomainError("need p >= 1 draws")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    atoms = atoms_of(prior)
    if atoms is not None:
        vals, probs = atoms
        return rng.choice(vals, size=p, p=probs / probs.sum())
    if isinstance(prior, Gaussian):
        return rng.normal(prior.mu, np.sqrt(prior.var), size=p)
    if isinstance(prior, Exponential):
        return rng.exponential(1.0 / prior.rate, size=p)
    raise DomainError(f"unknown prior spec {prior!r}")


def penalty_sequence(spec, p):
    """Length-p nonincreasing penalty vector realizing the spec."""
    if p < 1:
        raise DomainError("need p >= 1")
    if isinstance(spec, Constant):
        return np.full(p, spec.lam)
    if isinstance(spec, TwoLevel):
        n_top = min(max(int(np.ceil(spec.w * p)), 1), p - 1)
        out = np.full(p, spec.b)
        out[:n_top] = spec.a
        return out
    if isinstance(spec, QuantileTable):
        return _penalty_quantiles(spec, p + 1)
    raise DomainError(f"unknown penalty spec {spec!r}")


# ---------------------------------------------------------------------------
# JSON round-trip for CLI config files

_KIND_TAGS = {
    PointMixture: "point_mixture",
    Gaussian: "gaussian",
    Exponential: "exponential",
    ThreePoint: "three_point",
    Constant: "constant",
    TwoLevel: "two_level",
    QuantileTable: "quantile_table",
}


def spec_to_dict(spec):
    if isinstance(spec, PointMixture):
        return {"kind": "point_mixture", "atoms": [list(a) for a in spec.atoms]}
    if isinstance(spec, Gaussian):
        return {"kind": "gaussian", "mu": spec.mu, "var": spec.var}
    if isinstance(spec, Exponential):
        return {"kind": "exponential", "rate": spec.rate}
    if isinstance(spec, ThreePoint):
        return {
            "kind": "three_point",
            "m": spec.m,
            "eps": spec.eps,
            "eps_prime": spec.eps_prime,
        }
    if isinstance(spec, Constant):
        return {"kind": "constant", "lam": spec.lam}
    if isinstance(spec, TwoLevel):
        return {"kind": "two_level", "a": spec.a, "b": spec.b, "w": spec.w}
    if isinstance(spec, QuantileTable):
        return {"kind": "quantile_table", "values": list(spec.values)}
    raise DomainError(f"unknown spec {spec!r}")


def spec_from_dict(d):
    kind = d.get("kind")
    if kind == "point_mixture":
        return PointMixture(atoms=tuple(tuple(a) for a in d["atoms"]))
    if kind == "gaussian":
        return Gaussian(mu=d["mu"], var=d["var"])
    if kind == "exponential":
        return Exponential(rate=d["rate"])
    if kind == "three_point":
        return ThreePoint(m=d["m"], eps=d["eps"], eps_prime=d["eps_prime"])
    if kind == "constant":
        return Constant(lam=d["lam"])
    if kind == "two_level":
        return TwoLevel(a=d["a"], b=d["b"], w=d["w"])
    if kind == "quantile_table":
        return QuantileTable(values=tuple(d["values"]))
    raise DomainError(f"unknown spec kind {kind!r}")


def spec_to_json(spec):
    return json.dumps(spec_to_dict(spec))


def spec_from_json(text):
    return spec_from_dict(json.loads(text))
