"""Exception hierarchy shared by all circex modules."""

from __future__ import annotations


class CircexError(Exception):
    """Base class for every error raised by circex."""


class ParseError(CircexError, ValueError):
    """A table cell or row could not be parsed."""

    def __init__(self, message: str, *, row: int | None = None, column: str | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.row = row
        self.column = column


class DuplicateKeyError(ParseError):
    pass


class DuplicatePointError(ParseError):
    pass


class EmptyDatasetError(ParseError):
    pass


class SchemaError(CircexError, ValueError):
    pass


class DomainError(CircexError, ValueError):
    """An input lies outside the domain of the operation."""


class IncompleteInputError(CircexError, ValueError):
    pass


class UndefinedResultError(CircexError, ArithmeticError):
    """Division by zero, a zero-variance correlation, and similar."""


class InsufficientDataError(CircexError, ValueError):
    pass


class ConfigurationError(CircexError):
    pass


class FetchError(CircexError):
    def __init__(self, message: str, *, retryable: bool):
        super().__init__(message)
        self.retryable = retryable
