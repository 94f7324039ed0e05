"""Exception hierarchy shared by the solvers, the CLI and the HTTP layer.

Every domain error is a ``ValueError`` so the routers keep mapping them to
HTTP 400, and carries the exit code the CLI returns for it.
"""
from typing import Optional


class CBIError(ValueError):
    exit_code = 1


class InvalidConfig(CBIError):
    exit_code = 4


class FormatError(CBIError):
    exit_code = 5

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(CBIError):
    exit_code = 6


class EmptyPartition(CBIError):
    exit_code = 7


class DimensionMismatch(CBIError):
    exit_code = 8


class MetricMismatch(CBIError):
    exit_code = 9


class SampleIndexError(CBIError, IndexError):
    exit_code = 10


class InvalidBandwidth(CBIError):
    exit_code = 11


class EmptyTrainingSet(CBIError):
    exit_code = 12


class InvalidSubsample(CBIError):
    exit_code = 13


class NoCandidate(CBIError):
    exit_code = 14


class FilterViolation(CBIError):
    exit_code = 15


class InvalidModeCount(CBIError):
    exit_code = 16


class OutOfRange(CBIError):
    exit_code = 17


class BudgetInfeasible(CBIError):
    exit_code = 18


class InvalidSplit(CBIError):
    exit_code = 19


# Not a CBIError: raised for missing or unreadable files, mapped by the CLI.
IO_EXIT_CODE = 3
USAGE_EXIT_CODE = 2
UNEXPECTED_EXIT_CODE = 1
