"""Exception types shared across the package.

The CLI maps ``UsageError`` to exit code 1 and ``DataError`` to exit code 2.
"""


class UsageError(ValueError):
    """Bad arguments: wrong shapes, out-of-range parameters, empty inputs."""


class InvariantError(ValueError):
    """A value violates a structural invariant (e.g. non-PD covariance)."""


class EmptyStatsError(UsageError):
    """Parameter recovery was asked for with zero total count."""


class DataError(ValueError):
    """Malformed or inconsistent data on disk."""

    def __init__(self, message, offset=None, path=None):
        self.reason = message
        self.offset = offset
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if offset is not None:
            where.append(f"byte {offset}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
