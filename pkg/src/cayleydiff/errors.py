"""Exception hierarchy shared across the package.

Each class maps to one CLI exit status (see cli.EXIT_CODES).
"""


class CayleyDiffError(Exception):
    """Base class for all package errors."""


class UsageError(CayleyDiffError):
    """Bad command-line arguments or config keys."""


class EncodingError(CayleyDiffError):
    """A state vector is not a valid encoding for its graph family."""


class DomainError(CayleyDiffError):
    """An operation was called outside its domain (bad generator index,
    unsupported family, query with zero probability mass, determinant != 1)."""


class FormatError(CayleyDiffError):
    """A binary file (checkpoint, distance table, ball table) failed to parse."""


class ResourceLimitError(CayleyDiffError):
    """A memory/state-count budget was exceeded."""


class NumericError(CayleyDiffError):
    """A non-finite value appeared where a finite one is required."""
