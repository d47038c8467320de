"""Exception hierarchy shared by all modules."""


class DiracEdgeError(Exception):
    """Base class for every error raised by the package."""


class ConfigurationError(DiracEdgeError):
    """Invalid model kind, scenario field or cross reference."""


class AssumptionError(DiracEdgeError):
    """Non-degeneracy or tubular-neighbourhood hypothesis violated."""


class DomainError(DiracEdgeError):
    """Input lies outside the domain where an operation is defined."""


class RangeError(DiracEdgeError):
    """A grid, window or chart range is too small for the request."""


class ResolutionError(DiracEdgeError):
    """Discretisation too coarse (Nyquist) or too large (memory budget)."""


class ShapeError(DiracEdgeError):
    """Arrays or axes that must agree do not."""


class NumericalBlowupError(DiracEdgeError):
    """Non-finite values appeared during time stepping."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class DependencyError(DiracEdgeError):
    """A pipeline stage is missing artifacts produced by an earlier stage."""
