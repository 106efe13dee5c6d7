"""Exception types shared across the package."""

from __future__ import annotations


class VcatError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(VcatError):
    """Schema definition or schema/data mismatch problems."""


class DataFormatError(VcatError):
    """Malformed CSV content, unparseable cells, bad column values."""


class ConfigError(VcatError):
    """Invalid run configuration (CLI config file or argument values)."""


class ExternalGeneratorError(VcatError):
    """External generator executable violated the subprocess protocol."""
