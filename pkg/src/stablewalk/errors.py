"""Exception types shared by every module."""


class StableWalkError(Exception):
    """Base class for library errors."""


class UsageError(StableWalkError, ValueError):
    """Caller broke a precondition (bad argument, mixed groups, ...)."""


class DomainError(StableWalkError, ValueError):
    """An element or value lies outside the object it was given to."""


class UnreachedError(StableWalkError, LookupError):
    """Element exists in the group but lies beyond the enumerated radius."""


class BudgetExceeded(StableWalkError, RuntimeError):
    """A memory or support-size budget was hit; carries partial diagnostics."""

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


class CertificationError(StableWalkError, RuntimeError):
    """Certified error intervals are too wide for the requested computation."""
