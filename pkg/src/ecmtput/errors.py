"""Exception types raised across the package."""


class EcmtputError(Exception):
    """Base class for all package errors."""


class TraceFormatError(EcmtputError, ValueError):
    """A trace file line could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(EcmtputError, ValueError):
    """Input violates a structural invariant."""


class DomainError(EcmtputError, ValueError):
    """Argument outside the domain of an operation."""


class InsufficientDataError(EcmtputError):
    """Not enough observations to answer the query."""
