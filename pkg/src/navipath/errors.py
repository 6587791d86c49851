"""Exception hierarchy shared across the package."""


class NaviPathError(Exception):
    """Base class for all package errors."""


class ValidationError(NaviPathError):
    """Invalid input: bad geometry, out-of-range values, malformed records."""


class NotFoundError(NaviPathError):
    """A referenced slide, tile, session, or recommendation does not exist."""


class StorageError(NaviPathError):
    """A stored artifact is missing or unreadable."""


class TimeRegressionError(ValidationError):
    """An event timestamp moved backwards within a trace."""
