"""Exception hierarchy.

The CLI maps these onto exit codes: input problems (``FormatError``,
``DataValidationError``) exit with 2, estimation problems with 3.
"""


class FocusedMRError(Exception):
    """Base class for all package errors."""


class FormatError(FocusedMRError, ValueError):
    """Malformed input file (missing column, bad header)."""


class DataValidationError(FocusedMRError, ValueError):
    """Well-formed input whose values violate the data contract."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EstimationError(FocusedMRError, ArithmeticError):
    """An estimator is undefined for the given data (e.g. weak instruments)."""


class NumericError(FocusedMRError, ArithmeticError):
    """A numerical contract failed, e.g. an indefinite covariance matrix."""
