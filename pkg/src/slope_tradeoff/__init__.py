"""Sorted-l1 (SLOPE) TPP-FDP trade-off toolkit.

Modules
-------
sorted_l1        proximal operator, norm, effective penalty
dists            prior/penalty distributions, quantiles, posterior means
state_evolution  AMP fixed point, calibration, asymptotic TPP/FDP
tradeoff         phase boundary, power limit, upper-bound curve
qp               monotone-chain quadratic programs (two solvers)
lower_bound      discretized variational lower bound, analytic penalties
empirics         synthetic experiments, solvers, instance search
cli              command-line front end
"""

from .dists import (
    Constant,
    Exponential,
    Gaussian,
    PointMixture,
    ProblemShape,
    QuantileTable,
    ThreePoint,
    TwoLevel,
)
from .sorted_l1 import (
    effective_penalty,
    prox,
    soft_threshold,
    sorted_l1_norm,
    unique_nonzero_magnitudes,
)
from .state_evolution import SeSolution, solve_state_evolution
from .tradeoff import epsilon_star, q_upper, t_star, u_star_dt

__version__ = "0.1.0"

__all__ = [
    "ProblemShape",
    "PointMixture",
    "Gaussian",
    "Exponential",
    "ThreePoint",
    "Constant",
    "TwoLevel",
    "QuantileTable",
    "sorted_l1_norm",
    "prox",
    "soft_threshold",
    "unique_nonzero_magnitudes",
    "effective_penalty",
    "SeSolution",
    "solve_state_evolution",
    "epsilon_star",
    "u_star_dt",
    "t_star",
    "q_upper",
    "__version__",
]
