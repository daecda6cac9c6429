"""Exception hierarchy shared by all brachia modules."""

from __future__ import annotations


class BrachiaError(Exception):
    """Base class for every error raised by this package."""


# --- expressions -------------------------------------------------------------

class ExprSyntaxError(BrachiaError, ValueError):
    def __init__(self, message: str, text: str = "", pos: int = 0):
        self.text = text
        self.pos = pos
        where = f" at position {pos}" if text else ""
        super().__init__(f"{message}{where}" + (f": {text!r}" if text else ""))


class UnknownIdentifier(ExprSyntaxError):
    pass


class VariableIndexError(ExprSyntaxError):
    pass


class EvaluationDomainError(BrachiaError, ArithmeticError):
    """Evaluation produced a non-finite value (division by zero, overflow)."""


# --- extremals ---------------------------------------------------------------

class SingularLocus(BrachiaError):
    """The switching vector h_I is (numerically) zero; the feedback is undefined."""


class SingularStart(SingularLocus):
    pass


class StepFailure(BrachiaError, RuntimeError):
    pass


# --- junction ----------------------------------------------------------------

class NotOnLocus(BrachiaError, ValueError):
    pass


class NoRoot(BrachiaError):
    pass


class DegenerateFrame(BrachiaError):
    pass


class BootstrapInconsistent(BrachiaError):
    pass


# --- certify / variation -----------------------------------------------------

class PrereqFailed(BrachiaError):
    pass


class WrongDimensions(BrachiaError, ValueError):
    pass


class NormalFormMissing(BrachiaError):
    pass


class InadmissiblePerturbation(BrachiaError, ValueError):
    pass


class ChartExit(BrachiaError):
    pass


# --- cli ---------------------------------------------------------------------

class ScenarioError(BrachiaError, ValueError):
    """Scenario file failed validation; ``field`` names the offending key."""

    def __init__(self, field: str, reason: str):
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")
