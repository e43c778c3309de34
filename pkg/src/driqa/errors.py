"""Toolkit error classes, mapped to CLI exit codes.

Exit-code contract: 0 success, 1 usage/config error, 2 data error,
3 numeric failure (non-finite loss or score).
"""


class DriqaError(Exception):
    """Base class for toolkit errors."""

    exit_code = 1


class UsageError(DriqaError):
    """Bad flags, malformed config, schema violations."""

    exit_code = 1


class DataError(DriqaError):
    """Unreadable/missing/inconsistent data: images, datasets, checkpoints."""

    exit_code = 2


class NumericError(DriqaError):
    """Non-finite loss or score encountered."""

    exit_code = 3
