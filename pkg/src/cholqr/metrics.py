"""Quality metrics of a computed factorization and the bounds they are checked against."""

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from src.cholqr.error_model import (
    BINARY64,
    Algorithm,
    Precision,
    ProblemShape,
    check_p_value,
    default_lambda,
    deterministic_scale,
    randomized_scale,
    theorem_probability,
)
from src.cholqr.exceptions import DomainError
from src.cholqr.linalg_core import as_dense, fro_norm, g_norm, two_norm

if TYPE_CHECKING:
    from src.cholqr.algorithms import FactorizationResult

SHIFTED_ORTHOGONALITY_2NORM = 1.6
P_VALUE_EPS = float(np.finfo(np.float64).eps)


def orthogonality_error(Q) -> float:
    """||Q^T Q - I||_F with the Gram matrix formed in binary64."""
    Q = as_dense(Q, "orthogonality_error").astype(np.float64, copy=False)
    G = Q.T @ Q
    G[np.diag_indices_from(G)] -= 1.0
    return fro_norm(G)


def residual_error(Q, R, T) -> float:
    """||Q R - T||_F in binary64."""
    Q = as_dense(Q, "residual_error").astype(np.float64, copy=False)
    R = as_dense(R, "residual_error").astype(np.float64, copy=False)
    T = as_dense(T, "residual_error").astype(np.float64, copy=False)
    if Q.shape[1] != R.shape[0] or (Q.shape[0], R.shape[1]) != T.shape:
        raise DomainError(
            f"Error in residual_error: shapes Q{Q.shape} R{R.shape} T{T.shape} do not conform"
        )
    return fro_norm(Q @ R - T)


def p_value(T, g: float | None = None, two: float | None = None) -> float:
    """p = ||T||_g / ||T||_2.

    Precomputed norms can be passed in to avoid a second spectral solve.

    Raises:
        DomainError: if p leaves [1/sqrt(n), 1] by more than the roundoff of
            the two norms, (m + n) binary64 epsilons.
    """
    m, n = np.shape(T)
    g = g_norm(T) if g is None else g
    two = two_norm(T) if two is None else two
    if two == 0.0:
        raise DomainError("Error in p_value: the zero matrix has no p-value")
    tol = (m + n) * P_VALUE_EPS
    return check_p_value(g / two, n, "p-value", tol)


def bound_orthogonality(
    alg: Algorithm,
    shape: ProblemShape,
    u: float,
    lam: float,
    p2: float = 1.0,
    p3: float = 1.0,
) -> float:
    """Probabilistic upper bound on ||Q^T Q - I||_F.

    CholeskyQR2 uses p2, SC3 and 3C use p3. A single Shifted CholeskyQR pass
    only guarantees ||Q^T Q - I||_2 <= 1.6, reported here in Frobenius form.
    """
    alg = Algorithm(alg)
    n = shape.n
    if alg is Algorithm.SHIFTED_CHOLESKY_QR:
        return SHIFTED_ORTHOGONALITY_2NORM * math.sqrt(n)
    if alg is Algorithm.CHOLESKY_QR2:
        return 6.0 * lam * check_p_value(p2, n, "p2") ** 2 * randomized_scale(shape, u)
    if alg is Algorithm.SC3:
        return 6.0 * lam * check_p_value(p3, n, "p3") ** 2 * randomized_scale(shape, u)
    if alg is Algorithm.THREE_C:
        root_sum = math.sqrt(shape.m) + math.sqrt(n + 1)
        return 3645.0 * check_p_value(p3, n, "p3") ** 2 * root_sum**3 * n * u
    raise DomainError(f"No orthogonality bound for {alg.value}")


def sc3_residual_weight(p1: float, p2: float, p3: float) -> float:
    return 1.67 * p1 + 2.18 * p2 + 2.20 * p1 * p2 + 2.70 * p3 + 2.71 * p1 * p3


def three_c_residual_weight(p1: float, p2: float, p3: float) -> float:
    return 1.67 * p1 + 3.35 * p2 + 3.38 * p1 * p2 + 4.08 * p3 + 4.12 * p1 * p3


def bound_residual(
    alg: Algorithm,
    shape: ProblemShape,
    u: float,
    lam: float,
    p1: float = 1.0,
    p2: float = 1.0,
    p3: float = 1.0,
    two_norm_T: float = 1.0,
) -> float:
    """Probabilistic upper bound on ||Q R - T||_F, linear in ||T||_2."""
    alg = Algorithm(alg)
    n = shape.n
    if not two_norm_T > 0.0:
        raise DomainError(f"bound_residual requires ||T||_2 > 0, got {two_norm_T}")
    p1 = check_p_value(p1, n, "p1")
    p2 = check_p_value(p2, n, "p2")
    p3 = check_p_value(p3, n, "p3")
    if alg is Algorithm.SHIFTED_CHOLESKY_QR:
        weight = 1.67 * p1
    elif alg is Algorithm.CHOLESKY_QR2:
        weight = 1.2 * p1 + 1.32 * p2 + 1.32 * p1 * p2
    elif alg is Algorithm.SC3:
        weight = sc3_residual_weight(p1, p2, p3)
    elif alg is Algorithm.THREE_C:
        weight = three_c_residual_weight(p1, p2, p3)
    else:
        raise DomainError(f"No residual bound for {alg.value}")
    return weight * lam * n * math.sqrt(n) * u * two_norm_T


def bound_orthogonality_deterministic(alg: Algorithm, shape: ProblemShape, u: float) -> float:
    """6 (m n u + n(n+1) u), for CholeskyQR2 and for SC3 with the column-based shift."""
    alg = Algorithm(alg)
    if alg not in (Algorithm.CHOLESKY_QR2, Algorithm.SC3):
        raise DomainError(f"No deterministic orthogonality bound for {alg.value}")
    return 6.0 * deterministic_scale(shape, u)


def bound_residual_deterministic(
    alg: Algorithm, shape: ProblemShape, u: float, p: float = 1.0, two_norm_T: float = 1.0
) -> float:
    alg = Algorithm(alg)
    n = shape.n
    if alg is Algorithm.CHOLESKY_QR2:
        return 5.0 * n**2 * u * two_norm_T
    if alg is Algorithm.SC3:
        return (6.57 * check_p_value(p, n, "p") + 4.81) * n**2 * u * two_norm_T
    raise DomainError(f"No deterministic residual bound for {alg.value}")


@dataclass(frozen=True)
class ReportContext:
    algorithm: Algorithm
    precision: Precision = BINARY64
    lam: float | None = None
    deterministic_shift: bool = False  # some shifted pass used the column-based formula


@dataclass(frozen=True)
class QualityReport:
    orthogonality: float
    residual_abs: float
    residual_rel: float
    p1: float | None
    p2: float | None
    p3: float | None
    bound_orth: float | None
    bound_resid: float | None
    bound_satisfied: tuple[bool | None, bool | None]
    probability: float | None = None


def _bounds(
    context: ReportContext, shape: ProblemShape, p1, p2, p3, two_T: float
) -> tuple[float | None, float | None, float | None]:
    alg = Algorithm(context.algorithm)
    u = context.precision.u
    if alg is Algorithm.CHOLESKY_QR:
        return None, None, None
    if context.deterministic_shift and alg is Algorithm.THREE_C:
        # no bound covers 3C with a column-based shift
        return None, None, None
    if context.deterministic_shift and alg is Algorithm.SC3:
        return (
            bound_orthogonality_deterministic(alg, shape, u),
            bound_residual_deterministic(alg, shape, u, p1, two_T),
            None,
        )
    lam = context.lam if context.lam is not None else default_lambda(shape)
    p2 = 1.0 if p2 is None else p2
    p3 = 1.0 if p3 is None else p3
    return (
        bound_orthogonality(alg, shape, u, lam, p2, p3),
        bound_residual(alg, shape, u, lam, p1, p2, p3, two_T),
        theorem_probability(alg, shape, lam, u),
    )


def make_report(result: "FactorizationResult", T, context: ReportContext) -> QualityReport:
    """Measure a completed factorization and evaluate its bounds with the traced p-values."""
    T64 = as_dense(T, "make_report", tall=True).astype(np.float64, copy=False)
    shape = ProblemShape(*T64.shape)
    orthogonality = orthogonality_error(result.Q)
    residual_abs = residual_error(result.Q, result.R, T64)
    fro_T = fro_norm(T64)
    residual_rel = residual_abs / fro_T if fro_T > 0.0 else math.inf

    p1, p2, p3 = result.trace.p_values()
    stages = result.trace.stages
    two_T = stages[0].two_norm_in if stages and stages[0].two_norm_in else two_norm(T64)
    bound_orth, bound_resid, probability = _bounds(context, shape, p1, p2, p3, two_T)

    satisfied = (
        None if bound_orth is None else orthogonality <= bound_orth,
        None if bound_resid is None else residual_abs <= bound_resid,
    )
    if False in satisfied:
        logging.warning(
            f"{Algorithm(context.algorithm).value} {shape.m}x{shape.n}: measured "
            f"({orthogonality:.3e}, {residual_abs:.3e}) exceeds bounds "
            f"({bound_orth}, {bound_resid})"
        )
    return QualityReport(
        orthogonality=orthogonality,
        residual_abs=residual_abs,
        residual_rel=residual_rel,
        p1=p1,
        p2=p2,
        p3=p3,
        bound_orth=bound_orth,
        bound_resid=bound_resid,
        bound_satisfied=satisfied,
        probability=probability,
    )
