"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes or dimensions violate an operation's contract."""


class GraphError(RuntimeError):
    """Autodiff graph contract violation: cycle, non-scalar root, bad rule output."""


class NumericError(ArithmeticError):
    """A computation produced or would produce non-finite values."""


class ParameterError(ValueError):
    """A spec object (precision, noise, normalization) got an invalid field."""


class DegenerateInputError(ValueError):
    """Input is degenerate for the requested operation (e.g. zero tensor to a norm)."""


class DataFormatError(ValueError):
    """A dataset file failed validation; message includes the byte offset."""


class ConfigError(ValueError):
    """A trial or sweep configuration failed validation."""
