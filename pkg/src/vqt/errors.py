"""Exception types shared across the package."""


class VQTError(Exception):
    """Base class for all package errors."""


class DomainError(VQTError, ValueError):
    """A classical value lies outside the encodable range [-1, 1]."""


class CircuitError(VQTError, ValueError):
    """Structurally invalid gate or circuit (bad index, missing angle, ...)."""


class FitError(VQTError, ValueError):
    """Degenerate input to a calibration fit."""


class NumericError(VQTError, RuntimeError):
    """Non-finite values encountered (NaN loss, overflow)."""
