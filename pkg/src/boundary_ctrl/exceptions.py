"""Exception hierarchy shared by all modules."""


class BoundaryCtrlError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(BoundaryCtrlError, ValueError):
    """An argument is outside its documented domain."""


class PreconditionError(BoundaryCtrlError, ValueError):
    """An input violates a numerical precondition (e.g. Hermiticity)."""

    def __init__(self, message, deviation=None):
        super().__init__(message)
        self.deviation = deviation


class TruncationError(BoundaryCtrlError):
    """The Fourier truncation is too coarse for the requested operation."""

    def __init__(self, message, deviation=None):
        super().__init__(message)
        self.deviation = deviation


class NonConvergenceError(BoundaryCtrlError, RuntimeError):
    """Propagator refinement did not reach the requested tolerance."""

    def __init__(self, message, k=None, gap=None):
        super().__init__(message)
        self.k = k
        self.gap = gap


class CertificationError(BoundaryCtrlError, RuntimeError):
    """A measured distance exceeded its certified bound."""

    def __init__(self, message, bound=None, measured=None):
        super().__init__(message)
        self.bound = bound
        self.measured = measured


class ConfigError(InvalidArgumentError):
    """An experiment configuration failed validation; ``field`` names the culprit."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
