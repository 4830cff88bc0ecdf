"""Exception types shared across the library.

The CLI maps these onto process exit codes, so the split matters:
config problems, data/parse problems, and numeric blow-ups are
distinguishable failures.
"""


class ShapeError(ValueError):
    """Operands have incompatible dimensions."""


class NumericError(ArithmeticError):
    """A computation produced a non-finite value."""


class ParseError(ValueError):
    """A file could not be decoded. Carries the byte offset of the problem."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(ValueError):
    """An experiment configuration is invalid."""
