"""CholeskyQR-family QR factorizations of tall-skinny matrices, with shift selection
from the matrix g-norm and an experiment harness."""

from src.cholqr.algorithms import (
    FactorizationResult,
    InstrumentationTrace,
    StageRecord,
    cholesky_qr,
    cholesky_qr2,
    run_pipeline,
    shifted_cholesky_qr,
    shifted_cholesky_qr3,
    three_c,
)
from src.cholqr.error_model import (
    BINARY32,
    BINARY64,
    Algorithm,
    Precision,
    ProblemShape,
    ShiftMode,
    ShiftStrategy,
)
from src.cholqr.exceptions import (
    BreakdownError,
    CholQRError,
    ConfigurationError,
    ConvergenceError,
    DomainError,
    MeasurementMismatchError,
    SingularTriangularError,
)
