"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ParameterError -> 1, DataError -> 2,
ExternalServiceError -> 3.
"""


class LexigraphError(Exception):
    """Base class for all package errors."""


class ParameterError(LexigraphError, ValueError):
    """An argument violates an operation's contract (bad k, bad overlap, ...)."""


class DataError(LexigraphError):
    """Input data violates an invariant (duplicate ids, empty vocabulary, ...)."""


class ExternalServiceError(LexigraphError):
    """A remote embedding/chat service failed after retries."""
