"""Standard-normal density, CDF, inverse CDF, and a stable Mills ratio.

All routines are erfc/erfcx based (full double accuracy, including far tails).
"""

import numpy as np
from scipy import special

_SQRT2 = np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def phi(x):
    """Standard normal density."""
    x = np.asarray(x, dtype=float)
    return _INV_SQRT2PI * np.exp(-0.5 * x * x)


def Phi(x):
    """Standard normal CDF, accurate in both tails."""
    return special.ndtr(np.asarray(x, dtype=float))


def Phi_inv(u):
    """Inverse standard normal CDF."""
    return special.ndtri(np.asarray(u, dtype=float))


def mills_ratio_lower(x):
    """phi(x)/Phi(x), stable for x -> -inf (where Phi underflows)."""
    x = np.asarray(x, dtype=float)
    return np.sqrt(2.0 / np.pi) / special.erfcx(-x / _SQRT2)
