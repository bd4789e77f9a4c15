"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage errors 1, data validation 2,
numerical failures 3.
"""


class DartsolveError(Exception):
    pass


class DataValidationError(DartsolveError):
    """Malformed or inconsistent input data."""


class NumericalError(DartsolveError):
    """Estimation or solver failure (non-convergence, degeneracy)."""


class FitError(NumericalError):
    """Carries the last iterate so callers can inspect a failed fit."""

    def __init__(self, message, *, last=None, residual=None, trajectory=None):
        super().__init__(message)
        self.last = last
        self.residual = residual
        self.trajectory = trajectory
