"""Exception types raised by the package."""


class InvalidParameterError(ValueError):
    """An intensity or procedure parameter is outside its admissible range."""


class PositivityError(InvalidParameterError):
    """A spike alternative would take negative values (r**2 > D / 2**J)."""


class ConfigError(ValueError):
    """A calibration, power or probe configuration is inconsistent."""


class TableMismatchError(ConfigError):
    """A quantile table does not match the pattern or procedure it is used with."""


class SchemaVersionError(ValueError):
    """A serialized file carries an unsupported schema version."""


class PatternFormatError(ValueError):
    """A point-pattern CSV file is malformed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
