"""Exception hierarchy shared by every module.

Each class carries the CLI exit code it maps to: 2 for validation problems,
3 for numerical failures, 4 for I/O.
"""

from __future__ import annotations


class LabError(Exception):
    exit_code = 3


class ValidationFailure(LabError, ValueError):
    """Bad inputs or violated preconditions."""

    exit_code = 2


class NumericFailure(LabError):
    exit_code = 3


# graphgen
class OddDegreeSum(ValidationFailure):
    pass


class InfeasibleDegree(ValidationFailure):
    pass


class RetryBudgetExceeded(NumericFailure):
    pass


class TooLarge(ValidationFailure):
    pass


class EdgeNotPresent(ValidationFailure):
    pass


class InvalidSwitching(ValidationFailure):
    pass


# spectral
class NoConvergence(NumericFailure):
    pass


class BranchUndefined(ValidationFailure):
    pass


# locallaw
class SolveFailure(NumericFailure):
    pass


class DirectionNotOrthogonal(ValidationFailure):
    pass


# interpolate
class TimeOutOfRange(ValidationFailure):
    pass


class CouplingOutOfRange(ValidationFailure):
    pass


# steinlab
class BadSupport(ValidationFailure):
    pass


class ExcessDegeneracy(NumericFailure):
    pass


class EmptySample(ValidationFailure):
    pass


class DegenerateSample(NumericFailure):
    pass


class UnknownTestFunction(ValidationFailure):
    pass


class DegenerateFit(NumericFailure):
    pass


# malliavin
class DegenerateEigenvalue(NumericFailure):
    pass


# harness
class ParseError(ValidationFailure):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(ValidationFailure):
    pass


class BadColumns(ValidationFailure):
    pass


class OutputError(LabError):
    exit_code = 4
