"""Shared exception types."""


class InvalidParameterError(ValueError):
    """An argument is outside the contract of the operation."""


class AssumptionViolationError(ValueError):
    """A coefficient fails ellipticity, boundary structure or trace bounds."""


class DegenerateDirectionError(RuntimeError):
    """A CG search direction produced zero forward sensitivity."""


class DivergenceError(RuntimeError):
    """Fixed-point increments stopped decreasing (data too rough)."""
