"""Seeded test matrices with a prescribed 2-norm condition number.

T = W [diag(sigma); 0] Y^T, sigma_i = kappa^(-(i-1)/(n-1)), so ||T||_2 = 1 and
kappa_2(T) = kappa.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from src.cholqr.exceptions import DomainError, MeasurementMismatchError
from src.cholqr.linalg_core import (
    DenseMatrix,
    as_dense,
    freeze,
    min_singular_value,
    random_orthogonal,
    random_orthonormal_columns,
    two_norm,
)

KAPPA_MAX = 1e16
FULL_W_MAX_ROWS = 2048
MEASURABLE_KAPPA = 1e7
KAPPA_RTOL = 1e-4
FACTOR_DISTRIBUTION = "uniform"


@dataclass(frozen=True)
class GeneratedMatrix:
    matrix: DenseMatrix
    kappa_target: float
    sigma_values: np.ndarray
    seed: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape


@dataclass(frozen=True)
class KappaMeasurement:
    value: float
    provenance: str  # "measured" or "metadata"


def singular_values(n: int, kappa: float) -> np.ndarray:
    """Geometric sequence from 1 down to 1/kappa, endpoints exact."""
    exponents = np.arange(n, dtype=np.float64) / (n - 1)
    sigma = np.power(float(kappa), -exponents)
    sigma[0] = 1.0
    sigma[-1] = 1.0 / kappa
    sigma.setflags(write=False)
    return sigma


@lru_cache(maxsize=32)
def _left_factor(m: int, n: int, seed: int) -> DenseMatrix:
    # shared by every kappa of a seed sweep
    if m <= FULL_W_MAX_ROWS:
        return freeze(random_orthogonal(m, seed, FACTOR_DISTRIBUTION)[:, :n])
    return random_orthonormal_columns(m, n, seed, FACTOR_DISTRIBUTION)


def generate(m: int, n: int, kappa: float, seed: int) -> GeneratedMatrix:
    """Build T = W Sigma Y^T for a given seed.

    W and Y are Householder Q factors of uniform [0, 1) matrices. W is the
    first n columns of an m x m factor when m <= 2048 and a thin factor of an
    m x n sample otherwise; Y comes from seed + 1.

    With uniform samples the largest column norm of T sits near 0.3 ||T||_2 at
    1024 x 32 and decreases as kappa grows.
    """
    if n < 2:
        raise DomainError(f"Error in generate: n must be >= 2, got {n}")
    if m < n:
        raise DomainError(f"Error in generate: need m >= n, got {m}x{n}")
    if not 1.0 <= kappa <= KAPPA_MAX:
        raise DomainError(f"Error in generate: kappa must lie in [1, {KAPPA_MAX:g}], got {kappa}")

    W = _left_factor(m, n, seed)
    Y = random_orthogonal(n, seed + 1, FACTOR_DISTRIBUTION)
    sigma = singular_values(n, kappa)
    T = (W * sigma) @ Y.T
    logging.debug(f"Generated {m}x{n} matrix, kappa={kappa:g}, seed={seed}")
    return GeneratedMatrix(
        matrix=freeze(T), kappa_target=float(kappa), sigma_values=sigma, seed=seed
    )


def measured_kappa(gm: GeneratedMatrix) -> KappaMeasurement:
    """kappa_2(T), measured when the Gram can resolve sigma_n, else from metadata.

    Raises:
        MeasurementMismatchError: if a measured value disagrees with the target
            by more than 1e-4 relative.
    """
    if gm.kappa_target > MEASURABLE_KAPPA:
        return KappaMeasurement(gm.kappa_target, "metadata")
    kappa = two_norm(gm.matrix) / min_singular_value(gm.matrix)
    if abs(kappa - gm.kappa_target) > KAPPA_RTOL * gm.kappa_target:
        raise MeasurementMismatchError(
            f"Measured kappa {kappa:.6e} differs from target {gm.kappa_target:.6e} "
            f"(seed {gm.seed})"
        )
    return KappaMeasurement(kappa, "measured")


def save_matrix(T, path: str | Path) -> None:
    """Write "m n" and then one row per line, 17 significant digits."""
    T = as_dense(T, "save_matrix").astype(np.float64, copy=False)
    m, n = T.shape
    np.savetxt(path, T, fmt="%.17g", header=f"{m} {n}", comments="")


def load_matrix(path: str | Path) -> DenseMatrix:
    path = Path(path)
    with path.open() as f:
        header = f.readline().split()
        try:
            m, n = (int(v) for v in header)
        except ValueError:
            raise DomainError(f"Error in load_matrix: bad header {header!r} in {path}")
        values = np.loadtxt(f, dtype=np.float64, ndmin=2)
    if values.shape != (m, n):
        raise DomainError(
            f"Error in load_matrix: header says {m}x{n} but {path} holds {values.shape}"
        )
    return freeze(as_dense(values, "load_matrix"))
