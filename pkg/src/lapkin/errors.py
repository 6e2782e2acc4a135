"""Exception types raised across the package."""


class LapkinError(Exception):
    """Base class for all package errors."""


class InvalidInput(LapkinError, ValueError):
    """Non-finite or malformed numeric input."""


class NonOrthonormal(LapkinError, ValueError):
    """A matrix that should be a rotation is not."""


class Unreachable(LapkinError):
    """Handle pose violates the triangle inequality around the RCM."""


class DegenerateGeometry(LapkinError):
    """Geometry is singular (parallel axes, coincident points)."""


class DimensionMismatch(LapkinError, ValueError):
    pass


class OutOfOrderSample(LapkinError):
    pass
