"""Exception types shared across the package."""


class DimensionMismatchError(ValueError):
    """Vector arguments whose lengths must agree do not."""


class DomainError(ValueError):
    """A scalar argument lies outside the domain of the operation."""


class ResolutionError(ValueError):
    """The requested discretization is too coarse for the distribution."""


class ConvergenceError(RuntimeError):
    """An iterative solver failed to converge; carries the iterate trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []


class CalibrationInfeasibleError(RuntimeError):
    """Calibration produced a negative penalty (zero-threshold below its floor)."""


class QpStructureError(ValueError):
    """The QP instance does not have the supported constraint structure."""


class ConfigurationError(ValueError):
    """A search configuration admits no feasible point at all."""


class InstabilityError(RuntimeError):
    """An iterate diverged (norm explosion)."""


class NumericalError(RuntimeError):
    """A numeric pipeline produced non-finite intermediates; carries diagnostics."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
