"""Exception hierarchy shared by the library and the CLI exit-code mapping."""

from __future__ import annotations


class KptrackError(Exception):
    """Base class for all errors raised by kptrack."""


class DataError(KptrackError, ValueError):
    """Input data violates a structural or numeric invariant."""


class ParseError(DataError):
    """A file could not be parsed; ``location`` names the line or field."""

    def __init__(self, message: str, location: str | None = None):
        self.location = location
        if location:
            message = f"{location}: {message}"
        super().__init__(message)


class ShapeError(DataError):
    """Trajectory lengths or counts are inconsistent."""


class NonFiniteError(DataError):
    """NaN or infinite coordinates were found."""


class ConfigError(KptrackError, ValueError):
    """Configuration is invalid or incomplete (e.g. missing threshold)."""


class OutOfDomainWarning(UserWarning):
    """Coordinates fall outside the canonical [-1, 1] x [-1, 1] domain."""
