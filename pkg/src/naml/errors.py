"""Exception hierarchy shared across the package."""


class NamlError(Exception):
    """Base class for all package errors."""


class DimensionError(NamlError, ValueError):
    """Tensor shapes do not fit the operation."""


class InvalidMaskError(NamlError, ValueError):
    """A softmax mask leaves no position to normalise over."""


class GraphError(NamlError, RuntimeError):
    """The recorded computation graph cannot be used (e.g. already released)."""


class NumericalError(NamlError, ArithmeticError):
    """NaN or Inf appeared in a forward value or a loss."""


class ConfigError(NamlError, ValueError):
    """Invalid or inconsistent configuration."""


class DataError(NamlError, ValueError):
    """Input data is missing or malformed."""


class ParseError(DataError):
    """A text input could not be parsed; carries the 1-based line number."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class CheckpointError(NamlError, ValueError):
    """Checkpoint file is truncated or malformed."""


class IncompatibleCheckpointError(CheckpointError):
    """Checkpoint does not match the vocabulary or configuration in use."""
