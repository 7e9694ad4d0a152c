"""Exception types shared across the package."""


class SeqTestError(Exception):
    """Base class for all package errors."""


class ArgumentError(SeqTestError, ValueError):
    """An input violates a documented precondition."""


class NumericalError(SeqTestError, ArithmeticError):
    """A computation produced a non-finite intermediate value."""


class PolicyFormatError(ArgumentError):
    """A serialized policy file is malformed.

    ``location`` is a human-readable position (``line 12`` or ``offset 0x40``).
    """

    def __init__(self, message: str, location: str | None = None):
        self.location = location
        if location is not None:
            message = f"{location}: {message}"
        super().__init__(message)
