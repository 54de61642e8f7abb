"""Exception types shared across the package."""


class EhsrbError(Exception):
    """Base class for all package errors."""


class ConfigurationError(EhsrbError):
    """A system/config invariant is violated; message names the constraint."""


class DomainError(EhsrbError):
    """Input outside the operation's domain (point outside U, zero vector, ...)."""


class GeometryError(EhsrbError):
    """Degenerate cone geometry (overlapping or tangent cones)."""


class NumericError(EhsrbError):
    """Numerical guard tripped (singular jacobian within tolerance, ...)."""


class IntegrityError(EhsrbError):
    """Internal consistency violated (orbit escaped the trapping region, ...)."""


class PreconditionError(EhsrbError):
    """Stated precondition of an operation not met."""


class StatisticsError(EhsrbError):
    """Not enough data for a statistical estimate."""


class BoundedTimeError(EhsrbError):
    """Integration hit the time horizon without the exit event firing."""

    def __init__(self, message: str, horizon: float):
        super().__init__(message)
        self.horizon = horizon


class DiagnosticsError(EhsrbError):
    """A capped iterative procedure (e.g. piece merging) exceeded its cap."""
