"""Exception types shared across the package."""

from __future__ import annotations


class ParseError(ValueError):
    """Structurally malformed input file (bad header, wrong token count)."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DataError(ValueError):
    """Well-formed file carrying invalid values (non-finite, bad rotation)."""


class ConfigError(ValueError):
    """Unknown configuration key or constraint violation."""


class DegenerateGeometryError(ValueError):
    """Geometry too degenerate for the requested estimate."""


class InsufficientOverlapError(RuntimeError):
    """Too few correspondences between source and target."""
