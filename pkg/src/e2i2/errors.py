"""Exception types shared across the package."""


class E2I2Error(ValueError):
    """Base class for all errors raised by this package."""


class DimensionMismatchError(E2I2Error):
    """Operands have incompatible shapes for the requested operation."""


class ValidationError(E2I2Error):
    """An object violates one of its declared invariants."""


class ConfigError(E2I2Error):
    """A run configuration failed to parse or references unknown keys."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        super().__init__(message)
        self.line = line
        self.column = column
