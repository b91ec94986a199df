"""Dense kernels every CholeskyQR variant is assembled from.

Matrices are plain numpy arrays (float64, or float32 for binary32 runs).
Arrays built here are column-major and read-only, so they can be shared
between threads without copying.
"""

import logging
import math

import numpy as np
import numpy.typing as npt
from scipy.linalg import eigvalsh, get_blas_funcs, get_lapack_funcs, solve_triangular

from src.cholqr.exceptions import (
    BreakdownError,
    ConvergenceError,
    DomainError,
    SingularTriangularError,
)
from src.utils.settings import get_settings

DenseMatrix = npt.NDArray[np.floating]
SymmetricMatrix = npt.NDArray[np.floating]
UpperTriangular = npt.NDArray[np.floating]

JACOBI_TOLERANCE = 1e-14
JACOBI_MAX_SWEEPS = 50

_FLOAT_TYPES = (np.float32, np.float64)


def freeze(values) -> DenseMatrix:
    """Return a column-major, read-only copy of `values`."""
    array = np.array(values, order="F", copy=True)
    if array.dtype.type not in _FLOAT_TYPES:
        array = array.astype(np.float64, order="F")
    array.setflags(write=False)
    return array


def as_dense(T, op: str, tall: bool = False) -> DenseMatrix:
    """Validate a matrix argument without copying it.

    Args:
        T: array-like, 2-D
        op: operation name used in error messages
        tall: require rows >= cols

    Returns:
        The argument as a float32/float64 numpy array.
    """
    array = np.asarray(T)
    if array.ndim != 2 or array.size == 0:
        raise DomainError(f"Error in {op}: expected a nonempty 2-D matrix, got shape {array.shape}")
    if array.dtype.type not in _FLOAT_TYPES:
        array = array.astype(np.float64)
    if not np.all(np.isfinite(array)):
        raise DomainError(f"Error in {op}: matrix of shape {array.shape} has non-finite entries")
    if tall and array.shape[0] < array.shape[1]:
        raise DomainError(f"Error in {op}: expected rows >= cols, got shape {array.shape}")
    return array


def _as_square(U, op: str) -> SymmetricMatrix:
    array = as_dense(U, op)
    if array.shape[0] != array.shape[1]:
        raise DomainError(f"Error in {op}: expected a square matrix, got shape {array.shape}")
    return array


def _mirror_upper(U: np.ndarray) -> np.ndarray:
    upper = np.triu(U)
    return upper + np.triu(upper, 1).T


def gram(T) -> SymmetricMatrix:
    """Gram matrix T^T T, bitwise symmetric (upper triangle mirrored)."""
    T = as_dense(T, "gram", tall=True)
    return freeze(_mirror_upper(T.T @ T))


def cholesky(U) -> UpperTriangular:
    """Upper Cholesky factor V with V^T V = U.

    Raises:
        BreakdownError: when a pivot is <= 0 (or NaN).
    """
    U = _as_square(U, "cholesky")
    (potrf,) = get_lapack_funcs(("potrf",), (U,))
    V, info = potrf(U, lower=False, clean=True, overwrite_a=False)
    if info > 0:
        logging.debug(f"Cholesky breakdown at pivot {info} of {U.shape[0]}")
        raise BreakdownError(
            f"Cholesky breakdown: pivot {info} of {U.shape[0]} is not positive",
            pivot_index=int(info),
        )
    if info < 0:
        raise DomainError(f"Error in cholesky: LAPACK potrf rejected argument {-info}")
    return freeze(np.triu(V))


def add_shift(U, s: float) -> SymmetricMatrix:
    """Return U + s*I; off-diagonal entries are untouched."""
    U = _as_square(U, "add_shift")
    if not s >= 0 or not math.isfinite(s):
        raise DomainError(f"Error in add_shift: shift must be a finite nonnegative number, got {s}")
    shifted = np.array(U, order="F", copy=True)
    diagonal = np.diag_indices(shifted.shape[0])
    shifted[diagonal] += shifted.dtype.type(s)
    shifted.setflags(write=False)
    return shifted


def solve_triangular_right(T, V) -> DenseMatrix:
    """Solve Q V = T for Q by substitution; V^{-1} is never formed."""
    T = as_dense(T, "solve_triangular_right")
    V = _as_square(V, "solve_triangular_right")
    if V.shape[0] != T.shape[1]:
        raise DomainError(
            f"Error in solve_triangular_right: V is {V.shape} but T has {T.shape[1]} columns"
        )
    zeros = np.flatnonzero(np.diag(V) == 0)
    if zeros.size:
        index = int(zeros[0]) + 1
        raise SingularTriangularError(
            f"Error in solve_triangular_right: V({index},{index}) is exactly zero", index=index
        )
    # Q V = T  <=>  V^T Q^T = T^T
    Q_t = solve_triangular(V, T.T, trans="T", lower=False, check_finite=False)
    return freeze(Q_t.T)


def triangular_product(A, B) -> UpperTriangular:
    """Product of two upper-triangular matrices via BLAS trmm."""
    A = _as_square(A, "triangular_product")
    B = _as_square(B, "triangular_product")
    if A.shape != B.shape:
        raise DomainError(f"Error in triangular_product: shapes {A.shape} and {B.shape} differ")
    dtype = np.promote_types(A.dtype, B.dtype)
    A = np.asarray(A, dtype=dtype)
    product = np.array(B, dtype=dtype, order="F", copy=True)
    (trmm,) = get_blas_funcs(("trmm",), (A, product))
    product = trmm(1.0, A, product, side=0, lower=0, trans_a=0, diag=0, overwrite_b=True)
    return freeze(np.triu(product))


def g_norm(T) -> float:
    """Largest Euclidean column norm."""
    T = as_dense(T, "g_norm")
    return float(np.max(np.linalg.norm(T.astype(np.float64, copy=False), axis=0)))


def fro_norm(T) -> float:
    T = np.asarray(T, dtype=np.float64)
    return float(np.linalg.norm(T)) if T.size else 0.0


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    # Each round pairs every index exactly once, so its rotations commute.
    players = list(range(n + n % 2))
    rounds = []
    for _ in range(len(players) - 1):
        half = len(players) // 2
        pairs = sorted(
            (min(a, b), max(a, b))
            for a, b in zip(players[:half], reversed(players[half:]))
            if a < n and b < n
        )
        rounds.append((np.array([p for p, _ in pairs]), np.array([q for _, q in pairs])))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def jacobi_eigenvalues(
    S, tolerance: float = JACOBI_TOLERANCE, max_sweeps: int = JACOBI_MAX_SWEEPS
) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    A sweep visits every off-diagonal pair once, in round-robin order so the
    rotations of one round touch disjoint rows and columns and can be applied
    together. Iteration stops once the off-diagonal Frobenius mass drops
    below `tolerance * ||S||_F`.

    Returns:
        np.ndarray: eigenvalues in ascending order.

    Raises:
        ConvergenceError: if `max_sweeps` sweeps do not converge.
    """
    A = np.array(_as_square(S, "jacobi_eigenvalues"), dtype=np.float64, order="C", copy=True)
    n = A.shape[0]
    scale = np.linalg.norm(A)
    if n == 1 or scale == 0.0:
        return np.sort(np.diag(A).copy())

    threshold = tolerance * scale
    schedule = _round_robin(n)
    off_norm = np.linalg.norm(A - np.diag(np.diag(A)))
    sweeps = 0
    while off_norm >= threshold:
        if sweeps == max_sweeps:
            raise ConvergenceError(
                f"Jacobi iteration did not converge in {max_sweeps} sweeps "
                f"(off-diagonal norm {off_norm:.3e}, target {threshold:.3e})",
                sweeps=sweeps,
                off_norm=float(off_norm),
            )
        for p, q in schedule:
            apq = A[p, q]
            active = apq != 0.0
            if not active.any():
                continue
            p, q, apq = p[active], q[active], apq[active]
            with np.errstate(over="ignore", divide="ignore"):
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.where(theta >= 0.0, 1.0, -1.0) / (np.abs(theta) + np.hypot(theta, 1.0))
            c = 1.0 / np.hypot(t, 1.0)
            s = t * c

            rows_p, rows_q = A[p, :], A[q, :]
            A[p, :] = c[:, None] * rows_p - s[:, None] * rows_q
            A[q, :] = s[:, None] * rows_p + c[:, None] * rows_q
            cols_p, cols_q = A[:, p], A[:, q]
            A[:, p] = cols_p * c - cols_q * s
            A[:, q] = cols_p * s + cols_q * c
            A[p, q] = 0.0
            A[q, p] = 0.0
        sweeps += 1
        off_norm = np.linalg.norm(A - np.diag(np.diag(A)))

    logging.debug(f"Jacobi converged: n={n}, sweeps={sweeps}, off={off_norm:.3e}")
    return np.sort(np.diag(A).copy())


def symmetric_eigenvalues(S) -> np.ndarray:
    """Ascending eigenvalues; Jacobi up to the configured dimension, LAPACK above it."""
    S = _as_square(S, "symmetric_eigenvalues")
    if S.shape[0] <= get_settings().jacobi_max_dim:
        return jacobi_eigenvalues(S)
    logging.debug(f"Gram of dimension {S.shape[0]} above Jacobi limit; using eigvalsh")
    return eigvalsh(np.asarray(S, dtype=np.float64), check_finite=False)


def two_norm(T) -> float:
    """Largest singular value, from the eigenvalues of the smaller Gram matrix."""
    T = as_dense(T, "two_norm").astype(np.float64, copy=False)
    small = T.T @ T if T.shape[0] >= T.shape[1] else T @ T.T
    largest = symmetric_eigenvalues(_mirror_upper(small))[-1]
    return math.sqrt(max(float(largest), 0.0))


def min_singular_value(T) -> float:
    """Smallest singular value sigma_n(T) = 1 / ||R^{-1}||_2.

    R comes from a Householder QR of T, so the result stays accurate well
    past the point where sigma_n^2 is lost in the Gram matrix. Accuracy
    still degrades as kappa_2(T) approaches 1/u.
    """
    T = as_dense(T, "min_singular_value", tall=True).astype(np.float64, copy=False)
    R = np.linalg.qr(T, mode="r")
    if np.any(np.diag(R) == 0.0):
        return 0.0
    R_inv = solve_triangular(R, np.eye(R.shape[0]), lower=False, check_finite=False)
    return 1.0 / two_norm(R_inv)


def _unsigned_seed(seed: int) -> int:
    return int(seed) & 0xFFFF_FFFF_FFFF_FFFF


SAMPLERS = ("normal", "uniform")


def _sample(rows: int, cols: int, seed: int, distribution: str) -> np.ndarray:
    rng = np.random.default_rng(_unsigned_seed(seed))
    if distribution == "normal":
        return rng.standard_normal((rows, cols))
    if distribution == "uniform":
        return rng.random((rows, cols))
    raise DomainError(f"Unknown sampling distribution {distribution!r}; expected one of {SAMPLERS}")


def _householder_orthonormal(sample: np.ndarray) -> DenseMatrix:
    Q, R = np.linalg.qr(sample)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return freeze(Q * signs)


def random_orthogonal(dim: int, seed: int, distribution: str = "normal") -> DenseMatrix:
    """Seeded dim x dim orthogonal matrix.

    A standard-normal (Haar) or uniform [0, 1) matrix is orthogonalized by
    Householder QR with the signs fixed so that diag(R) >= 0; identical
    seeds give identical bits.
    """
    if dim < 1:
        raise DomainError(f"Error in random_orthogonal: dim must be >= 1, got {dim}")
    return _householder_orthonormal(_sample(dim, dim, seed, distribution))


def random_orthonormal_columns(
    rows: int, cols: int, seed: int, distribution: str = "normal"
) -> DenseMatrix:
    """Seeded rows x cols matrix with orthonormal columns (thin Householder QR)."""
    if not rows >= cols >= 1:
        raise DomainError(
            f"Error in random_orthonormal_columns: need rows >= cols >= 1, got {rows}x{cols}"
        )
    return _householder_orthonormal(_sample(rows, cols, seed, distribution))
