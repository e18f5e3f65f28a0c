"""Exception hierarchy shared by the numerical core."""

from typing import Any, List, Optional


class FlyLoRAError(Exception):
    """Base class for every error raised by the library."""


class DimensionError(FlyLoRAError, ValueError):
    """Raised when operand shapes or lengths do not line up."""


class InvalidParameterError(FlyLoRAError, ValueError):
    """Raised when a parameter lies outside its admissible domain."""


class DegenerateInputError(FlyLoRAError, ValueError):
    """Raised when the requested quantity is undefined for the given input."""


class MatrixFormatError(FlyLoRAError, ValueError):
    """Raised when FLYMAT text cannot be parsed."""


class ContractViolationError(FlyLoRAError):
    """Raised when a caller breaks a pairing contract (e.g. a stale routing decision)."""


class TrainingFailureError(FlyLoRAError):
    """Exception raised when training diverges."""

    def __init__(self, message: str, trace: Optional[List[Any]] = None):
        self.trace = list(trace or [])
        super().__init__(message)


class ConfigError(FlyLoRAError):
    """Exception raised for an invalid or missing configuration key."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"Config key '{key}': {message}")


class ReportError(FlyLoRAError):
    """Exception raised when an artifact cannot be written or read."""

    def __init__(self, path: str, message: str, original_error: Optional[Exception] = None):
        self.path = path
        self.original_error = original_error
        super().__init__(f"{path}: {message}")
