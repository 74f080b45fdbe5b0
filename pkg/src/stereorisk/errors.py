"""Exception types shared across the package."""


class InputError(ValueError):
    """Raised when an argument violates a documented precondition."""


class FormatError(OSError):
    """Raised when a file cannot be parsed (bad header, truncated payload, ...)."""
