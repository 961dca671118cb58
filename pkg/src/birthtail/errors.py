"""Exception hierarchy shared by every module.

The CLI maps :class:`PrecisionLossError` to exit code 2 and every other
:class:`BirthtailError` to exit code 1.
"""

from __future__ import annotations


class BirthtailError(Exception):
    """Base class for all library errors."""


class DomainError(BirthtailError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ParseError(DomainError):
    """A textual specification does not conform to its grammar."""

    def __init__(self, message: str, token: str | None = None):
        super().__init__(message if token is None else f"{message}: {token!r}")
        self.token = token


class DivergenceError(DomainError):
    """A requested series diverges."""


class UndecidableError(DomainError):
    """A property cannot be decided from the available description."""


class DistinctnessError(DomainError):
    """Rates that must be pairwise distinct are equal or nearly equal."""


class UnsupportedError(DomainError):
    """The requested family combination is not covered by a known result."""


class AssumptionError(DomainError):
    """A side condition required by the asymptotic result fails."""


class DegenerateTieError(BirthtailError):
    """Two explosion times coincide to within floating point resolution."""


class EmptySampleError(DomainError):
    """A conditioned sample has no members."""


class InsufficientDataError(DomainError):
    """Too few support points for a fit."""


class RegistryError(DomainError):
    """Unknown experiment name or configuration key."""


class PrecisionLossError(BirthtailError, ArithmeticError):
    """Cancellation in an alternating sum exceeds the precision budget."""

    def __init__(self, message: str, condition: float | None = None):
        super().__init__(message)
        self.condition = condition


class RangeError(DomainError):
    """Empirical and predicted supports do not overlap."""


class DegenerateSampleError(DomainError):
    """A statistic is undefined because a sample has zero variance."""
