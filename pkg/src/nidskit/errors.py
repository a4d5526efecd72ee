"""Shared exception taxonomy.

Three families, matching the CLI exit codes: usage errors (bad flags,
unknown config keys) exit 1, data errors (parse/schema/validation
failures) exit 2, and runtime errors (training/numerics) exit 3.
"""


class NidsError(Exception):
    """Base class for every error raised by this package."""


class UsageError(NidsError):
    """Bad invocation: unknown flag, unknown config key, missing argument."""

    exit_code = 1


class DataError(NidsError):
    """The input data violates the expected schema or value ranges."""

    exit_code = 2


class RunError(NidsError):
    """A training or evaluation step failed at runtime."""

    exit_code = 3


class EmptyInputError(DataError):
    """An operation that needs at least one row/value received none."""


class LengthMismatchError(DataError):
    """Two parallel sequences disagree in length."""
