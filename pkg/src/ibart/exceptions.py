"""Exception hierarchy; the CLI maps each family to a stable exit code."""


class IbartError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(IbartError, ValueError):
    """Inputs or configuration do not satisfy a documented precondition."""


class ParseError(ValidationError):
    """A descriptor string does not follow the grammar."""

    def __init__(self, message, text="", position=0):
        self.text = text
        self.position = position
        if text:
            message = f"{message} at position {position}: {text!r}"
        super().__init__(message)


class DomainError(IbartError, ArithmeticError):
    """An operator produced a non-finite or out-of-range value."""

    def __init__(self, operator, row, message=None):
        self.operator = operator
        self.row = row
        super().__init__(message or f"{operator} is undefined or out of range at row {row}")


class BudgetExceededError(ValidationError):
    """Exhaustive search would evaluate more subsets than allowed."""


class NoSignalError(IbartError):
    """Screening found nothing to build on."""
