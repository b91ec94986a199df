"""CholeskyQR, CholeskyQR2, Shifted CholeskyQR, Shifted CholeskyQR3 and 3C.

Every pipeline is a chain of passes over the same kernels:

    U = T^T T (+ s I),  V = chol(U),  Q = T V^{-1}

and every pass leaves a StageRecord behind, so callers can see the shift,
the g-norm, the 2-norm and the p-value each pass started from.
"""

import logging
from dataclasses import dataclass, field

from src.cholqr.error_model import Algorithm, ProblemShape, ShiftMode, ShiftStrategy, shift_range
from src.cholqr.exceptions import BreakdownError, DomainError
from src.cholqr.linalg_core import (
    DenseMatrix,
    UpperTriangular,
    add_shift,
    as_dense,
    cholesky,
    g_norm,
    gram,
    solve_triangular_right,
    triangular_product,
    two_norm,
)
from src.cholqr.metrics import p_value

S2_NORMS = ("g", "two")


@dataclass(frozen=True)
class StageRecord:
    stage_index: int
    stage_name: str
    shift_applied: float
    g_norm_in: float
    two_norm_in: float | None = None
    p_value: float | None = None
    breakdown: bool = False
    shift_in_range: bool | None = None


@dataclass(frozen=True)
class InstrumentationTrace:
    algorithm: Algorithm
    stages: tuple[StageRecord, ...] = field(default_factory=tuple)

    def p_values(self) -> tuple[float | None, float | None, float | None]:
        """p1, p2, p3 measured on the inputs of the first three passes."""
        values = [stage.p_value for stage in self.stages[:3]]
        return tuple(values + [None] * (3 - len(values)))

    def shifts(self) -> tuple[float | None, float | None]:
        """s1, s2 of the shifted passes; None where the pipeline has no such shift."""
        shifted = [s.shift_applied for s in self.stages if s.stage_name.startswith("shifted")]
        shifted = shifted[: self.algorithm.shift_count]
        return tuple(shifted + [None] * (2 - len(shifted)))

    @property
    def broke_down(self) -> bool:
        return any(stage.breakdown for stage in self.stages)


@dataclass(frozen=True)
class FactorizationResult:
    Q: DenseMatrix
    R: UpperTriangular
    trace: InstrumentationTrace


def _shift_in_range(
    strategy: ShiftStrategy, shape: ProblemShape, s: float, p: float, two: float
) -> bool:
    lam = strategy.lam if strategy.mode is ShiftMode.RANDOMIZED else None
    if lam is None:
        return s <= two**2 / 100.0
    low, high = shift_range(shape, strategy.u, lam, p, two)
    return low * (1.0 - 1e-12) <= s <= high


class _Pipeline:
    """Runs the passes of one algorithm invocation and collects their records."""

    def __init__(self, algorithm: Algorithm, T):
        self.algorithm = algorithm
        self.T = as_dense(T, algorithm.value, tall=True)
        self.shape = ProblemShape(*self.T.shape)
        self.stages: list[StageRecord] = []

    def trace(self) -> InstrumentationTrace:
        return InstrumentationTrace(self.algorithm, tuple(self.stages))

    def run_pass(
        self,
        X: DenseMatrix,
        stage_name: str,
        strategy: ShiftStrategy | None = None,
        shift_norm: str = "g",
    ) -> tuple[DenseMatrix, UpperTriangular]:
        stage_index = len(self.stages) + 1
        g = g_norm(X)
        two = two_norm(X)
        p = p_value(X, g=g, two=two)

        s, in_range = 0.0, None
        U = gram(X)
        if strategy is not None:
            s = strategy.shift(self.shape, g if shift_norm == "g" else two)
            in_range = _shift_in_range(strategy, self.shape, s, p, two)
            U = add_shift(U, s)
        logging.debug(
            f"{self.algorithm.value} stage {stage_index} ({stage_name}): "
            f"s={s:.3e}, g={g:.6e}, two={two:.6e}, p={p:.4f}"
        )

        try:
            V = cholesky(U)
        except BreakdownError as e:
            self.stages.append(
                StageRecord(stage_index, stage_name, s, g, two, p, True, in_range)
            )
            logging.warning(
                f"{self.algorithm.value} broke down in stage {stage_index} ({stage_name}) "
                f"at pivot {e.pivot_index}"
            )
            raise BreakdownError(
                f"{self.algorithm.value}: Cholesky breakdown in stage {stage_index} "
                f"({stage_name}) at pivot {e.pivot_index}",
                pivot_index=e.pivot_index,
                stage=stage_name,
                stage_index=stage_index,
                trace=self.trace(),
            ) from e

        Q = solve_triangular_right(X, V)
        self.stages.append(StageRecord(stage_index, stage_name, s, g, two, p, False, in_range))
        return Q, V

    def result(self, Q: DenseMatrix, R: UpperTriangular) -> FactorizationResult:
        return FactorizationResult(Q=Q, R=R, trace=self.trace())


def cholesky_qr(T) -> FactorizationResult:
    """Single CholeskyQR pass: R = chol(T^T T), Q = T R^{-1}."""
    pipeline = _Pipeline(Algorithm.CHOLESKY_QR, T)
    Q, V = pipeline.run_pass(pipeline.T, "cholesky_qr")
    return pipeline.result(Q, V)


def cholesky_qr2(T) -> FactorizationResult:
    """Two CholeskyQR passes; R = V1 V."""
    pipeline = _Pipeline(Algorithm.CHOLESKY_QR2, T)
    Q, V = pipeline.run_pass(pipeline.T, "cholesky_qr")
    Q1, V1 = pipeline.run_pass(Q, "cholesky_qr")
    return pipeline.result(Q1, triangular_product(V1, V))


def shifted_cholesky_qr(T, strategy: ShiftStrategy) -> FactorizationResult:
    """One shifted pass, V = chol(T^T T + s I).

    The returned Q is well conditioned but not orthonormal: ||Q^T Q - I||_2
    is only bounded by 1.6.
    """
    pipeline = _Pipeline(Algorithm.SHIFTED_CHOLESKY_QR, T)
    Q, V = pipeline.run_pass(pipeline.T, "shifted_cholesky_qr", strategy)
    return pipeline.result(Q, V)


def shifted_cholesky_qr3(T, strategy: ShiftStrategy) -> FactorizationResult:
    """Shifted CholeskyQR followed by CholeskyQR2; R = V3 (V1 V)."""
    pipeline = _Pipeline(Algorithm.SC3, T)
    Q, V = pipeline.run_pass(pipeline.T, "shifted_cholesky_qr", strategy)
    Q1, V1 = pipeline.run_pass(Q, "cholesky_qr")
    Q2, V3 = pipeline.run_pass(Q1, "cholesky_qr")
    return pipeline.result(Q2, triangular_product(V3, triangular_product(V1, V)))


def three_c(
    T, strategy1: ShiftStrategy, strategy2: ShiftStrategy, s2_norm: str = "g"
) -> FactorizationResult:
    """Two shifted passes and a final CholeskyQR; R = V3 (V1 V).

    Args:
        strategy1: shift formula for s1, evaluated with ||T||_g
        strategy2: shift formula for s2, evaluated on the first pass's Q
        s2_norm: "g" evaluates s2 with ||Q||_g, "two" with ||Q||_2
    """
    if s2_norm not in S2_NORMS:
        raise DomainError(f"s2_norm must be one of {S2_NORMS}, got {s2_norm!r}")
    pipeline = _Pipeline(Algorithm.THREE_C, T)
    Q, V = pipeline.run_pass(pipeline.T, "shifted_cholesky_qr", strategy1)
    Q1, V1 = pipeline.run_pass(Q, "shifted_cholesky_qr", strategy2, shift_norm=s2_norm)
    Q2, V3 = pipeline.run_pass(Q1, "cholesky_qr")
    return pipeline.result(Q2, triangular_product(V3, triangular_product(V1, V)))


def run_pipeline(
    algorithm: Algorithm | str,
    T,
    strategy1: ShiftStrategy | None = None,
    strategy2: ShiftStrategy | None = None,
    s2_norm: str = "g",
) -> FactorizationResult:
    """Dispatch to the pipeline named by `algorithm`."""
    algorithm = Algorithm.parse(algorithm) if isinstance(algorithm, str) else algorithm
    needed = algorithm.shift_count
    if (needed >= 1 and strategy1 is None) or (needed == 2 and strategy2 is None):
        raise DomainError(f"{algorithm.value} needs {needed} shift strategy argument(s)")

    if algorithm is Algorithm.CHOLESKY_QR:
        return cholesky_qr(T)
    if algorithm is Algorithm.CHOLESKY_QR2:
        return cholesky_qr2(T)
    if algorithm is Algorithm.SHIFTED_CHOLESKY_QR:
        return shifted_cholesky_qr(T, strategy1)
    if algorithm is Algorithm.SC3:
        return shifted_cholesky_qr3(T, strategy1)
    return three_c(T, strategy1, strategy2, s2_norm=s2_norm)

