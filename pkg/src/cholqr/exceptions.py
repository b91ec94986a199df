"""Exception hierarchy for the CholeskyQR library and experiment harness."""


class CholQRError(Exception):
    """Base class for every error raised by this package."""


class DomainError(CholQRError, ValueError):
    """A parameter or matrix lies outside the domain of an operation."""


class ConfigurationError(CholQRError, ValueError):
    """An experiment configuration failed validation before any computation."""


class BreakdownError(CholQRError):
    """Cholesky factorization hit a non-positive pivot.

    Attributes:
        pivot_index: 1-based index of the failing pivot.
        stage: name of the pipeline stage that failed, if raised inside a pipeline.
        stage_index: 1-based index of that stage.
        trace: partial InstrumentationTrace up to and including the failed stage.
    """

    def __init__(self, message: str, pivot_index: int, stage=None, stage_index=None, trace=None):
        super().__init__(message)
        self.pivot_index = pivot_index
        self.stage = stage
        self.stage_index = stage_index
        self.trace = trace


class SingularTriangularError(CholQRError):
    """A triangular factor has an exactly zero diagonal entry."""

    def __init__(self, message: str, index: int):
        super().__init__(message)
        self.index = index


class ConvergenceError(CholQRError):
    """The Jacobi eigenvalue iteration did not converge within its sweep cap."""

    def __init__(self, message: str, sweeps: int, off_norm: float):
        super().__init__(message)
        self.sweeps = sweeps
        self.off_norm = off_norm


class MeasurementMismatchError(CholQRError):
    """A measured quantity disagrees with the generator's ground truth."""
