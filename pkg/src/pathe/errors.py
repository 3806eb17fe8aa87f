"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: UsageError -> 1, DataError -> 2,
NumericError -> 3.
"""


class PatheError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(PatheError):
    """Bad arguments or configuration keys."""


class DataError(PatheError):
    """Malformed or missing input data (TSV files, corpus, checkpoints)."""


class NumericError(PatheError):
    """Non-finite values where finite ones are required."""


class ShapeError(PatheError):
    """Incompatible tensor shapes passed to an operation."""
