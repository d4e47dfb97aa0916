"""Exception hierarchy shared by every module."""

from __future__ import annotations


class BerlinError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(BerlinError, ValueError):
    pass


class NumericalDegeneracyError(BerlinError, ArithmeticError):
    """Raised when ridge state stops being SPD (signals corrupted state)."""


class InvalidStateError(BerlinError, RuntimeError):
    pass


class FormatError(BerlinError, ValueError):
    """Binary file does not follow the expected layout."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConsistencyError(BerlinError, ValueError):
    pass


class ConfigError(BerlinError, ValueError):
    pass


class DataError(BerlinError, ValueError):
    pass


class EndOfStream(BerlinError, StopIteration):
    """The environment has emitted all of its steps."""
