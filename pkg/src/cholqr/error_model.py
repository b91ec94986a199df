"""Closed-form rounding-error quantities for the CholeskyQR family.

Accumulation factors, success probabilities of the randomized rounding
model, both shift formulas, parameter-setting checks and the sufficient
conditions on kappa_2(T). Everything here is a pure function of its
arguments.
"""

import logging
import math
from dataclasses import dataclass
from enum import StrEnum

import numpy as np

from src.cholqr.exceptions import DomainError

LAMBDA_MAX = 10.0
SETTINGS_THRESHOLD = 1.0 / 2200.0
DETERMINISTIC_SETTINGS_THRESHOLD = 1.0 / 64.0
SHIFT_UPPER_FRACTION = 1.0 / 100.0


class Algorithm(StrEnum):
    CHOLESKY_QR = "CholeskyQR"
    CHOLESKY_QR2 = "CholeskyQR2"
    SHIFTED_CHOLESKY_QR = "ShiftedCholeskyQR"
    SC3 = "SC3"
    THREE_C = "3C"

    @property
    def shift_count(self) -> int:
        return {
            Algorithm.SHIFTED_CHOLESKY_QR: 1,
            Algorithm.SC3: 1,
            Algorithm.THREE_C: 2,
        }.get(self, 0)

    @property
    def pass_count(self) -> int:
        return {
            Algorithm.CHOLESKY_QR: 1,
            Algorithm.CHOLESKY_QR2: 2,
            Algorithm.SHIFTED_CHOLESKY_QR: 1,
        }.get(self, 3)

    @classmethod
    def parse(cls, name: str) -> "Algorithm":
        """Accept display names and snake_case aliases, case-insensitively."""
        key = name.strip().lower().replace("-", "_")
        aliases = {
            "choleskyqr": cls.CHOLESKY_QR,
            "cholesky_qr": cls.CHOLESKY_QR,
            "cqr": cls.CHOLESKY_QR,
            "choleskyqr2": cls.CHOLESKY_QR2,
            "cholesky_qr2": cls.CHOLESKY_QR2,
            "cqr2": cls.CHOLESKY_QR2,
            "shiftedcholeskyqr": cls.SHIFTED_CHOLESKY_QR,
            "shifted_cholesky_qr": cls.SHIFTED_CHOLESKY_QR,
            "scqr": cls.SHIFTED_CHOLESKY_QR,
            "sc3": cls.SC3,
            "shifted_cholesky_qr3": cls.SC3,
            "shiftedcholeskyqr3": cls.SC3,
            "3c": cls.THREE_C,
            "three_c": cls.THREE_C,
        }
        if key not in aliases:
            raise DomainError(f"Unknown algorithm {name!r}; expected one of {sorted(aliases)}")
        return aliases[key]


@dataclass(frozen=True)
class Precision:
    name: str
    u: float

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(np.float64 if self.name == "binary64" else np.float32)

    @property
    def short_name(self) -> str:
        return "f64" if self.name == "binary64" else "f32"

    @property
    def eps(self) -> float:
        """Machine epsilon, the spacing of floats at 1.0 (2u)."""
        return 2.0 * self.u


BINARY64 = Precision("binary64", 2.0**-53)
BINARY32 = Precision("binary32", 2.0**-24)


def precision_from_name(name: str) -> Precision:
    key = name.strip().lower()
    if key in ("binary64", "f64", "float64", "double"):
        return BINARY64
    if key in ("binary32", "f32", "float32", "single"):
        return BINARY32
    raise DomainError(f"Unknown precision {name!r}; expected f64 or f32")


@dataclass(frozen=True)
class ProblemShape:
    m: int
    n: int

    def __post_init__(self):
        if not self.m >= self.n >= 1:
            raise DomainError(f"Problem shape must satisfy m >= n >= 1, got {self.m}x{self.n}")


class ShiftMode(StrEnum):
    DETERMINISTIC = "deterministic"
    RANDOMIZED = "randomized"


def _check_lambda(lam) -> float:
    if lam is None or not 0.0 < lam <= LAMBDA_MAX:
        raise DomainError(f"lambda must satisfy 0 < lambda <= {LAMBDA_MAX:g}, got {lam}")
    return float(lam)


def _check_gnorm(gnorm: float) -> float:
    if not gnorm >= 0.0:
        raise DomainError(f"g-norm must be nonnegative, got {gnorm}")
    return float(gnorm)


def shift_deterministic(shape: ProblemShape, u: float, gnorm: float) -> float:
    """Column-based shift s = 11(mnu + n(n+1)u) ||T||_g^2."""
    m, n = shape.m, shape.n
    return 11.0 * (m * n * u + n * (n + 1) * u) * _check_gnorm(gnorm) ** 2


def shift_randomized(shape: ProblemShape, u: float, lam: float, gnorm: float) -> float:
    """Randomized-model shift s = 11 lambda (sqrt(m) n u + sqrt(n+1) n u) ||T||_g^2."""
    m, n = shape.m, shape.n
    lam = _check_lambda(lam)
    return 11.0 * lam * (math.sqrt(m) * n * u + math.sqrt(n + 1) * n * u) * _check_gnorm(gnorm) ** 2


@dataclass(frozen=True)
class ShiftStrategy:
    """Which shift formula a Shifted CholeskyQR pass uses."""

    mode: ShiftMode
    lam: float | None = None
    precision: Precision = BINARY64

    def __post_init__(self):
        object.__setattr__(self, "mode", ShiftMode(self.mode))
        if self.mode is ShiftMode.RANDOMIZED:
            object.__setattr__(self, "lam", _check_lambda(self.lam))

    @classmethod
    def deterministic(cls, precision: Precision = BINARY64) -> "ShiftStrategy":
        return cls(ShiftMode.DETERMINISTIC, None, precision)

    @classmethod
    def randomized(cls, lam: float, precision: Precision = BINARY64) -> "ShiftStrategy":
        return cls(ShiftMode.RANDOMIZED, lam, precision)

    @property
    def u(self) -> float:
        return self.precision.u

    def shift(self, shape: ProblemShape, norm: float) -> float:
        # the shift formulas are evaluated with machine epsilon in place of u
        if self.mode is ShiftMode.DETERMINISTIC:
            return shift_deterministic(shape, self.precision.eps, norm)
        return shift_randomized(shape, self.precision.eps, self.lam, norm)


def default_lambda(shape: ProblemShape) -> float:
    """6 for shapes up to max(m, n^2) = 4096, else 8."""
    return 6.0 if max(shape.m, shape.n**2) <= 4096 else 8.0


def gamma(k: int, u: float) -> float:
    """Deterministic accumulation factor k u / (1 - k u)."""
    if k < 0:
        raise DomainError(f"gamma requires k >= 0, got {k}")
    ku = k * u
    if ku >= 1.0:
        raise DomainError(f"gamma requires k*u < 1, got k={k}, u={u}")
    return ku / (1.0 - ku)


def gamma_tilde(k: int, u: float, lam: float) -> float:
    """Probabilistic accumulation factor exp(lambda sqrt(k) u + k u^2/(1-u)) - 1."""
    if k < 0:
        raise DomainError(f"gamma_tilde requires k >= 0, got {k}")
    if not 0.0 <= u < 1.0:
        raise DomainError(f"gamma_tilde requires 0 <= u < 1, got {u}")
    return math.expm1(lam * math.sqrt(k) * u + k * u * u / (1.0 - u))


def _failure_tail(lam: float, u: float) -> float:
    return 2.0 * math.exp(-(lam**2) * (1.0 - u) ** 2 / 2.0)


def prob_P(lam: float, u: float) -> float:
    """P(lambda) = 1 - 2 exp(-lambda^2 (1-u)^2 / 2); negative values are returned as-is."""
    if not lam > 0.0:
        raise DomainError(f"prob_P requires lambda > 0, got {lam}")
    return 1.0 - _failure_tail(lam, u)


def prob_Q_failure(lam: float, N: float, u: float) -> float:
    """Failure mass N (1 - P(lambda)) of the union bound over N rounding events.

    Stays resolvable where 1 - prob_Q rounds to zero.
    """
    if not lam > 0.0:
        raise DomainError(f"prob_Q requires lambda > 0, got {lam}")
    if not N >= 1:
        raise DomainError(f"prob_Q requires N >= 1, got {N}")
    return N * _failure_tail(lam, u)


def prob_Q(lam: float, N: float, u: float) -> float:
    """Union bound over N rounding events: 1 - N (1 - P(lambda))."""
    return 1.0 - prob_Q_failure(lam, N, u)


# Rounding-event counts of each stage, used as the N in prob_Q.
def events_gram(shape: ProblemShape) -> float:
    return float(shape.m * shape.n**2)


def events_cholesky(shape: ProblemShape) -> float:
    n = shape.n
    return n**3 / 6.0 + n**2 / 2.0 + n / 3.0


def events_triangular_solve(shape: ProblemShape) -> float:
    return shape.n * (shape.n + 1) / 2.0


def events_triangular_product(shape: ProblemShape) -> float:
    return float(shape.n**3)


def theorem_probability(alg: Algorithm, shape: ProblemShape, lam: float, u: float) -> float:
    """Probability with which the selected algorithm's probabilistic bounds hold."""
    alg = Algorithm(alg)
    q_gram = prob_Q(lam, events_gram(shape), u)
    q_chol = prob_Q(lam, events_cholesky(shape), u)
    q_solve = prob_Q(lam, events_triangular_solve(shape), u)
    q_product = prob_Q(lam, events_triangular_product(shape), u)
    one_pass = q_gram * q_chol * q_solve
    if alg is Algorithm.SHIFTED_CHOLESKY_QR:
        return one_pass
    if alg is Algorithm.CHOLESKY_QR2:
        return one_pass**2 * q_product
    if alg in (Algorithm.SC3, Algorithm.THREE_C):
        return one_pass**3 * q_product**2
    raise DomainError(f"No probabilistic theorem covers {alg.value}")


def sc3_condition_probability(shape: ProblemShape, lam: float, u: float) -> float:
    """Probability attached to the SC3 sufficient condition on kappa_2(T)."""
    q_gram = prob_Q(lam, events_gram(shape), u)
    q_chol = prob_Q(lam, events_cholesky(shape), u)
    return (q_gram * q_chol) ** 2 * prob_Q(lam, events_triangular_solve(shape), u)


@dataclass(frozen=True)
class SettingCheck:
    name: str
    lhs: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.lhs <= self.threshold


@dataclass(frozen=True)
class SettingsReport:
    checks: tuple[SettingCheck, ...]

    def _all(self, threshold: float) -> bool:
        return all(c.passed for c in self.checks if c.threshold == threshold)

    @property
    def randomized_regime(self) -> bool:
        return self._all(SETTINGS_THRESHOLD)

    @property
    def deterministic_regime(self) -> bool:
        return self._all(DETERMINISTIC_SETTINGS_THRESHOLD)

    @property
    def regime(self) -> str:
        if self.randomized_regime:
            return "1/2200"
        if self.deterministic_regime:
            return "1/64"
        return "none"


def check_settings(shape: ProblemShape, u: float, lam: float) -> SettingsReport:
    """Evaluate the general parameter settings the bounds assume."""
    m, n = shape.m, shape.n
    report = SettingsReport(
        checks=(
            SettingCheck("gram", max(lam * math.sqrt(m) * n * u, m * n * u), SETTINGS_THRESHOLD),
            SettingCheck(
                "cholesky", max(lam * math.sqrt(n + 1) * n * u, n * (n + 1) * u), SETTINGS_THRESHOLD
            ),
            SettingCheck("gram_deterministic", m * n * u, DETERMINISTIC_SETTINGS_THRESHOLD),
            SettingCheck(
                "cholesky_deterministic", n * (n + 1) * u, DETERMINISTIC_SETTINGS_THRESHOLD
            ),
        )
    )
    for check in report.checks:
        if not check.passed:
            logging.warning(
                f"Setting {check.name} violated for {m}x{n}, u={u:.3g}: "
                f"{check.lhs:.3e} > {check.threshold:.3e}"
            )
    return report


def check_p_value(p: float, n: int, name: str, tol: float = 1e-12) -> float:
    """Return p unchanged if it lies in [1/sqrt(n), 1] up to an absolute tol."""
    low = 1.0 / math.sqrt(n)
    if not low - tol <= p <= 1.0 + tol:
        raise DomainError(f"{name} must lie in [1/sqrt(n), 1] = [{low:.6g}, 1], got {p!r}")
    return float(p)


def randomized_scale(shape: ProblemShape, u: float) -> float:
    """sqrt(m) n u + sqrt(n+1) n u, the factor shared by the randomized bounds."""
    return math.sqrt(shape.m) * shape.n * u + math.sqrt(shape.n + 1) * shape.n * u


def deterministic_scale(shape: ProblemShape, u: float) -> float:
    """m n u + n(n+1) u, the factor shared by the deterministic bounds."""
    return shape.m * shape.n * u + shape.n * (shape.n + 1) * u


def sufficient_kappa(
    alg: Algorithm,
    shape: ProblemShape,
    u: float,
    lam: float,
    p1: float,
    p2: float = 1.0,
    deterministic: bool = False,
) -> float:
    """Largest kappa_2(T) for which the selected theorem guarantees its bounds.

    Args:
        alg: CholeskyQR2, SC3 or 3C
        p1, p2: measured p-values of T and of the first-stage Q
        deterministic: use the deterministic lemma instead of the randomized theorem
            (CholeskyQR2 and SC3 only)
    """
    alg = Algorithm(alg)
    p1 = check_p_value(p1, shape.n, "p1")
    p2 = check_p_value(p2, shape.n, "p2")
    n = shape.n
    if deterministic:
        if alg is Algorithm.CHOLESKY_QR2:
            return 1.0 / (8.0 * math.sqrt(deterministic_scale(shape, u)))
        if alg is Algorithm.SC3:
            return 1.0 / (96.0 * p1 * deterministic_scale(shape, u))
        raise DomainError(f"No deterministic sufficient condition for {alg.value}")

    lam = _check_lambda(lam)
    if alg is Algorithm.CHOLESKY_QR2:
        return 1.0 / (8.0 * p1 * math.sqrt(lam * randomized_scale(shape, u)))
    if alg is Algorithm.SC3:
        return 1.0 / (86.0 * lam * p1 * p2 * randomized_scale(shape, u))
    if alg is Algorithm.THREE_C:
        return 1.0 / (4.89 * lam * p1 * p2 * n * math.sqrt(n) * u)
    raise DomainError(f"No sufficient condition for {alg.value}")


def kappa_growth_bound(
    shape: ProblemShape, u: float, lam: float, p1: float, kappa: float, deterministic: bool = False
) -> float:
    """Upper bound on kappa_2(Q) after one Shifted CholeskyQR pass.

    Randomized shift: 3.24 sqrt(t) kappa with t = 11 p1^2 lambda (sqrt(m) n u + sqrt(n+1) n u).
    Column-based shift: 2 sqrt(3) sqrt(alpha) kappa with alpha = 11 (m n u + n(n+1) u) p1^2.
    """
    p1 = check_p_value(p1, shape.n, "p1")
    if deterministic:
        alpha = 11.0 * deterministic_scale(shape, u) * p1**2
        return 2.0 * math.sqrt(3.0) * math.sqrt(alpha) * kappa
    t = 11.0 * p1**2 * _check_lambda(lam) * randomized_scale(shape, u)
    return 3.24 * math.sqrt(t) * kappa


def shift_range(
    shape: ProblemShape, u: float, lam: float, p1: float, two_norm_T: float
) -> tuple[float, float]:
    """Admissible shift interval for the randomized Shifted CholeskyQR analysis."""
    p1 = check_p_value(p1, shape.n, "p1")
    low = 11.0 * p1**2 * _check_lambda(lam) * randomized_scale(shape, u) * two_norm_T**2
    return low, SHIFT_UPPER_FRACTION * two_norm_T**2
