"""
Exception types raised across the simulator.

Every error the CLI can report derives from `D2DSimError` so that it can be
mapped to a categorised exit code in one place.
"""
from typing import Optional


class D2DSimError(Exception):
    """Base class for all simulator errors."""

    category = "error"


class TraceParseError(D2DSimError):
    """Raised when a trace line cannot be parsed."""

    category = "parse"

    def __init__(self, message: str, path: Optional[str] = None, line_number: Optional[int] = None):
        self.path = path
        self.line_number = line_number
        location = ""
        if path is not None:
            location = f"{path}:"
        if line_number is not None:
            location = f"{location}{line_number}: "
        elif location:
            location = f"{location} "
        super().__init__(f"{location}{message}")


class TraceValidationError(D2DSimError):
    """Raised when parsed trace records violate a trace invariant."""

    category = "validation"


class ConfigurationError(D2DSimError):
    """Raised for invalid or infeasible configuration values."""

    category = "config"


class UnknownOptionError(D2DSimError, ValueError):
    """Raised when a named option (scheme, mode, axis, strategy) is not recognised."""

    category = "usage"

    def __init__(self, kind: str, value: object, allowed):
        self.kind = kind
        self.value = value
        self.allowed = tuple(allowed)
        super().__init__(f"Unknown {kind} '{value}'. Expected one of: {', '.join(map(str, self.allowed))}")


class InstanceTooLargeError(D2DSimError):
    """Raised when the exact optimiser is asked to enumerate a too large instance."""

    category = "oracle"


class SimulationInvariantError(D2DSimError):
    """Raised when the engine detects inconsistent state; names the slot."""

    category = "invariant"

    def __init__(self, slot: int, message: str):
        self.slot = slot
        super().__init__(f"slot {slot}: {message}")
