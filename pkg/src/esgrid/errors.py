"""Exception taxonomy shared across the grid services.

Transient errors are retryable by callers that implement retry loops
(the data mover, the virtual data service); permanent errors are not.
"""


class EsgError(Exception):
    """Base class for all grid errors."""

    code = "error"

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.message, **self.details}


class TransientError(EsgError):
    """Recoverable failure; safe to retry the same operation."""

    code = "transient"


class PermanentError(EsgError):
    """Failure that will not go away by retrying."""

    code = "permanent"


class NotFoundError(PermanentError):
    code = "not_found"


class ConflictError(PermanentError):
    code = "conflict"


class ValidationError(PermanentError):
    code = "invalid"


class AuthenticationError(PermanentError):
    code = "auth_failed"


class AuthorizationDenied(PermanentError):
    code = "denied"

    def __init__(self, message: str = "authorization denied", **details):
        super().__init__(message, **details)
