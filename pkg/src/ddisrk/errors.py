"""Exception hierarchy.

Every error carries a short machine-readable ``code`` and the process exit
status the command-line front end maps it to.
"""

from __future__ import annotations


class SrkError(Exception):
    code = "SrkError"
    exit_status = 3

    def __init__(self, message: str = "", *, index: int | None = None):
        super().__init__(message)
        self.index = index

    def __str__(self) -> str:
        msg = super().__str__()
        if self.index is not None:
            msg = f"{msg} (trajectory {self.index})"
        return msg


class UsageError(SrkError, ValueError):
    code = "UsageError"
    exit_status = 2


class UnknownScheme(UsageError):
    code = "UnknownScheme"


class UnknownProblem(UsageError):
    code = "UnknownProblem"


class ParameterOutOfRange(UsageError):
    code = "ParameterOutOfRange"


class InvalidRange(UsageError):
    code = "InvalidRange"


class NonpositiveStepSize(UsageError):
    code = "NonpositiveStepSize"


class ZeroDimension(UsageError):
    code = "ZeroDimension"


class StepCountMismatch(UsageError):
    code = "StepCountMismatch"


class ZeroInitialValue(UsageError):
    code = "ZeroInitialValue"


class TwoPointModeUnsupported(UsageError):
    code = "TwoPointModeUnsupported"


class DegenerateFamilyParameter(SrkError, ValueError):
    code = "DegenerateFamilyParameter"
    exit_status = 4


class PoleAtPoint(SrkError, ValueError):
    code = "PoleAtPoint"
    exit_status = 4


class SingularStageSystem(SrkError, ArithmeticError):
    code = "SingularStageSystem"
    exit_status = 4


class NewtonDivergence(SrkError, ArithmeticError):
    code = "NewtonDivergence"


class NonFiniteState(SrkError, ArithmeticError):
    code = "NonFiniteState"


class AllPointsNoiseDominated(SrkError):
    code = "AllPointsNoiseDominated"
