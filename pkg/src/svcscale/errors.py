class SvcError(Exception):
    """Base class for package errors."""


class DataError(SvcError, ValueError):
    """Input data violates a structural requirement."""


class FitError(SvcError, RuntimeError):
    """A model could not be estimated."""
