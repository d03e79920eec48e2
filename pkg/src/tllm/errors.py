"""Exception types shared across the package."""


class TllmError(Exception):
    """Base class for all package errors."""


class ShapeError(TllmError, ValueError):
    """Tensor shapes are incompatible for the requested operation."""


class ConfigError(TllmError, ValueError):
    """Invalid configuration, parameter sizing, or usage."""


class DataError(TllmError, ValueError):
    """Malformed or unusable input data."""


class NonFiniteError(TllmError, FloatingPointError):
    """A tensor contains NaN or Inf where finite values are required."""


class ExportError(TllmError, RuntimeError):
    """Model export was requested in an invalid state."""
