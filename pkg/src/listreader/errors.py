"""Exception hierarchy shared across the package."""


class ListReaderError(Exception):
    """Base class for all package errors."""


class ShapeError(ListReaderError, ValueError):
    """Operand shapes are incompatible."""


class ContractError(ListReaderError, ValueError):
    """A precondition of an operation was violated."""


class ValidationError(ListReaderError, ValueError):
    """Input data failed validation (bad JSONL line, overlapping spans, ...)."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(ListReaderError, ValueError):
    """Configuration is invalid or infeasible."""


class CheckpointError(ListReaderError):
    """A checkpoint could not be loaded into the requested model."""


class DivergenceError(ListReaderError, RuntimeError):
    """Training produced a non-finite value."""
