"""Exception types shared across the package."""


class HarmkitError(Exception):
    """Base class for all package errors."""


class ShapeError(HarmkitError, ValueError):
    """Raised when array/image dimensions are incompatible with an operation."""


class ParameterError(HarmkitError, ValueError):
    """Raised when an operation receives an out-of-range or invalid parameter."""
