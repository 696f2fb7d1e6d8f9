"""Exception hierarchy shared by every qbounce module."""


class QBounceError(Exception):
    """Base class for all errors raised by qbounce."""


class DomainError(QBounceError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConvergenceError(QBounceError, RuntimeError):
    """An iterative method exhausted its budget.

    ``partial`` carries whatever the method had computed when it gave up
    (for fits this is the last parameter vector and its residual).
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class ConfigError(QBounceError, ValueError):
    """A run configuration is malformed, incomplete or has unknown keys."""
