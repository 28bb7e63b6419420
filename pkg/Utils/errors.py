"""
Exception hierarchy shared by all services.

Every error raised on purpose by the laboratory derives from WinterNLSError so
the CLI can map it to an exit code in one place.
"""

from typing import Optional


class WinterNLSError(Exception):
    """Base class for laboratory errors."""


class DomainError(WinterNLSError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class PoleError(WinterNLSError):
    """Evaluation at a pole of a meromorphic quantity."""


class DivergenceError(WinterNLSError):
    """Quantity diverges at the requested argument (e.g. 𝒦(1))."""


class PreconditionError(WinterNLSError):
    """Operation called in a state where its precondition fails."""


class AccuracyError(WinterNLSError):
    """Quadrature or iteration did not reach the requested accuracy."""

    def __init__(self, message: str, estimate: Optional[float] = None):
        super().__init__(message)
        self.estimate = estimate


class InternalConsistencyError(WinterNLSError):
    """A reconstructed object violates an invariant it must satisfy."""


class InsufficientDataError(WinterNLSError):
    """Not enough samples to compute the requested quantity."""


class InvalidProfileError(WinterNLSError):
    """Stationary profile is singular or not normalizable."""


class NumericalFailureError(WinterNLSError):
    """NaN or overflow during a computation."""


class ConfigError(WinterNLSError):
    """Invalid run configuration."""


NUMERICAL_ERRORS = (
    AccuracyError,
    NumericalFailureError,
    InternalConsistencyError,
    DivergenceError,
    PoleError,
    InvalidProfileError,
    DomainError,
    PreconditionError,
    InsufficientDataError,
)
