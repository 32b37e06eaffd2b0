"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class MemfairError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateError(MemfairError):
    """A quantity required by a formula has zero mass or a vanishing denominator."""


class DegenerateSlice(DegenerateError):
    """A conditioning event has (numerically) zero probability."""


class DegenerateGroup(DegenerateError):
    """The group share p^+ is 0 or 1."""


class DegenerateClassGroup(DegenerateError):
    """Some class has zero mass in one of the groups."""

    def __init__(self, message: str, y: int | None = None):
        super().__init__(message)
        self.y = y


class InconsistentMasses(MemfairError):
    """The memorized mass of a (group, class) cell exceeds its population mass."""


class MissingPhi(MemfairError):
    """Prediction rates are neither supplied nor derivable."""


class NumericalBreakdown(MemfairError):
    """The simplex engine hit a pivot below tolerance or failed self-verification."""


class ZeroRateDivision(DegenerateError):
    def __init__(self, message: str, y: int | None = None):
        super().__init__(message)
        self.y = y


class PerfectClassDegenerate(DegenerateError):
    """A confusion-matrix diagonal entry equals 1, so 1 - C_yy cannot be divided by."""

    def __init__(self, message: str, y: int | None = None):
        super().__init__(message)
        self.y = y


class InvalidLambda(MemfairError, ValueError):
    pass


class RatioConditionFailed(MemfairError):
    def __init__(self, message: str, deviation: float, kind: str = "ratio"):
        super().__init__(message)
        self.deviation = deviation
        self.kind = kind


class DenominatorVanishes(DegenerateError):
    def __init__(self, message: str, y: int | None = None):
        super().__init__(message)
        self.y = y


class SolutionNotProbability(MemfairError):
    def __init__(self, message: str, quantity: str = ""):
        super().__init__(message)
        self.quantity = quantity
