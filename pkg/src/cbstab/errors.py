"""Exception hierarchy shared by every module."""


class CbstabError(Exception):
    """Base class.  ``stage`` is filled in by the recovery pipeline."""

    stage = None

    def __str__(self):
        msg = super().__str__()
        if self.stage:
            return f"[{self.stage}] {msg}"
        return msg


class StructuralError(CbstabError, ValueError):
    """Shapes, block structures or ambient spaces do not match."""


class NotInvertible(CbstabError, ArithmeticError):
    pass


class HypothesisNotMet(CbstabError):
    """A quantitative hypothesis (e.g. ``||T||_cb ||T^-1||_cb < sqrt 2``) fails.

    ``value`` carries the offending quantity when there is one.
    """

    def __init__(self, message, value=None):
        super().__init__(message)
        self.value = value


class NoConvergence(CbstabError):
    pass


class SingularStep(CbstabError):
    pass


class BoundViolation(CbstabError, AssertionError):
    """A measured quantity exceeds a bound that is supposed to be a theorem."""
