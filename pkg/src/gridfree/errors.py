"""Exception hierarchy.

Two families map onto the CLI exit codes: validation problems (exit 2) and
numerical problems (exit 3).
"""


class GridfreeError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ValidationError(GridfreeError, ValueError):
    exit_code = 2


class ConnectivityError(ValidationError):
    pass


class NumericalError(GridfreeError, ArithmeticError):
    exit_code = 3


class ReductionError(NumericalError):
    pass


class AmbiguousSpectrumError(NumericalError):
    pass


class NoCriticalElementError(NumericalError):
    pass


class DivergenceError(NumericalError):
    def __init__(self, message, t_bad=None):
        super().__init__(message)
        self.t_bad = t_bad
