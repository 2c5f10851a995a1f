"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: DomainError / DataError are caller
mistakes (exit 2), NumericError / TrainingError are runtime numerical
failures (exit 3).
"""


class SimodalError(Exception):
    """Base class for all package errors."""


class DomainError(SimodalError, ValueError):
    """A parameter or argument violates its documented domain."""


class DataError(SimodalError, ValueError):
    """Input data is malformed (missing column, NaN cell, bad schema)."""


class NumericError(SimodalError, ArithmeticError):
    """A numerical routine failed to converge or produced non-finite values."""


class TrainingError(NumericError):
    """SGD diverged.  Carries the last epoch with a finite loss."""

    def __init__(self, message: str, last_good_epoch: int = -1, curve=None):
        super().__init__(message)
        self.last_good_epoch = last_good_epoch
        self.curve = list(curve) if curve is not None else []
