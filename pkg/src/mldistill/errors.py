"""Exception types shared across the package.

The CLI maps these onto exit codes: UsageError -> 1, DataError -> 2,
anything else -> 3.
"""


class UsageError(Exception):
    """Invalid arguments or configuration supplied by the caller."""


class DataError(Exception):
    """Malformed or inconsistent input data (files, records, labels)."""
