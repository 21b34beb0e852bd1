"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
StageError -> 4. Everything else is a plain bug and escapes as-is.
"""


class AbprofileError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(AbprofileError):
    """Bad configuration: missing data files, out-of-range thresholds."""


class DataError(AbprofileError):
    """Malformed or inconsistent input data (parse errors, bad residues)."""


class UsageError(AbprofileError):
    """An operation was called with incompatible arguments."""


class NumberingFailure(AbprofileError):
    """No numbering profile scored above the alignment-quality floor."""

    def __init__(self, message, record_id=None):
        super().__init__(message)
        self.record_id = record_id


class StageError(AbprofileError):
    """A pipeline stage failed or its upstream artifacts are stale."""
