"""Exception hierarchy.

Input problems raise :class:`InvalidArgumentError` (a ``ValueError``) and
numerical failures raise subclasses of :class:`NumericDomainError`.  The CLI
maps the first family to exit code 2 and the second to exit code 3.
"""

from __future__ import annotations


class InvalidArgumentError(ValueError):
    """An argument violates a documented precondition."""


class DataFormatError(InvalidArgumentError):
    """A data file could not be parsed.

    ``row`` and ``column`` locate the offending cell when known (``row`` is
    the 1-based line number in the file).
    """

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


class NumericDomainError(ArithmeticError):
    """A computation left its valid numerical domain.

    ``index`` carries the offending sub-likelihood index when one applies;
    ``diagnostics`` holds free-form details for error reports.
    """

    def __init__(self, message: str, index: int | None = None, diagnostics: dict | None = None):
        super().__init__(message)
        self.index = index
        self.diagnostics = dict(diagnostics or {})


class ConditioningError(NumericDomainError):
    """A matrix that must be inverted is singular or not positive definite."""


class ConvergenceError(NumericDomainError):
    """A series or quadrature did not reach its tolerance."""
