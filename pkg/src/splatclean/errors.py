"""Exception hierarchy shared across the package.

CLI exit codes map onto these: ValidationError -> 2, TrainingError -> 3.
"""


class SplatCleanError(Exception):
    """Base class for all package errors."""


class ValidationError(SplatCleanError):
    """Bad input data: malformed files, invariant violations, bad indices."""


class TrainingError(SplatCleanError):
    """Runtime failure inside the optimization loop (e.g. scene emptied)."""
