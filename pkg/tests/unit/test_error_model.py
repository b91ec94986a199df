import math
from decimal import Decimal, getcontext
from fractions import Fraction

import numpy as np
import pytest

from src.cholqr.error_model import (
    BINARY32,
    BINARY64,
    Algorithm,
    ProblemShape,
    ShiftMode,
    ShiftStrategy,
    check_settings,
    default_lambda,
    events_cholesky,
    gamma,
    gamma_tilde,
    kappa_growth_bound,
    precision_from_name,
    prob_P,
    prob_Q,
    prob_Q_failure,
    shift_deterministic,
    shift_randomized,
    shift_range,
    sufficient_kappa,
    theorem_probability,
)
from src.cholqr.exceptions import DomainError

U = 2.0**-53
TABLE = ProblemShape(1024, 32)

getcontext().prec = 60


def _d(x) -> Decimal:
    return Decimal(x)


def reference_gamma_tilde(k, u, lam) -> float:
    arg = _d(lam) * _d(k).sqrt() * _d(u) + _d(k) * _d(u) ** 2 / (1 - _d(u))
    return float(arg.exp() - 1)


def reference_prob_Q(lam, N, u) -> float:
    tail = 2 * (-(_d(lam) ** 2) * (1 - _d(u)) ** 2 / 2).exp()
    return float(1 - _d(N) * tail)


def reference_shift_randomized(m, n, u, lam, g) -> float:
    scale = _d(m).sqrt() * n * _d(u) + _d(n + 1).sqrt() * n * _d(u)
    return float(11 * _d(lam) * scale * _d(g) ** 2)


def test_precisions():
    assert BINARY64.u == 2.0**-53 and BINARY32.u == 2.0**-24
    assert BINARY64.eps == np.finfo(np.float64).eps and BINARY32.eps == np.finfo(np.float32).eps
    assert BINARY64.dtype == np.float64 and BINARY32.dtype == np.float32
    assert precision_from_name("f32") is BINARY32
    assert precision_from_name("binary64") is BINARY64
    with pytest.raises(DomainError):
        precision_from_name("f16")


def test_problem_shape_requires_tall():
    with pytest.raises(DomainError):
        ProblemShape(3, 4)
    with pytest.raises(DomainError):
        ProblemShape(3, 0)


@pytest.mark.parametrize("lam", [0.0, -1.0, 10.5, None])
def test_randomized_strategy_rejects_lambda(lam):
    with pytest.raises(DomainError):
        ShiftStrategy(ShiftMode.RANDOMIZED, lam)


def test_strategy_shift_dispatch():
    eps = BINARY64.eps
    assert ShiftStrategy.deterministic().shift(TABLE, 1.0) == shift_deterministic(TABLE, eps, 1.0)
    assert ShiftStrategy.randomized(6).shift(TABLE, 1.0) == shift_randomized(TABLE, eps, 6, 1.0)
    assert ShiftStrategy.randomized(6).shift(TABLE, 1.0) == pytest.approx(1.77e-11, rel=1e-3)
    assert ShiftStrategy("randomized", 6).mode is ShiftMode.RANDOMIZED


def test_algorithm_aliases():
    assert Algorithm.parse("sc3") is Algorithm.SC3
    assert Algorithm.parse("three-c") is Algorithm.THREE_C
    assert Algorithm.parse("CholeskyQR2") is Algorithm.CHOLESKY_QR2
    with pytest.raises(DomainError):
        Algorithm.parse("householder")


def test_gamma():
    assert gamma(0, U) == 0.0
    ref = Fraction(10) * Fraction(U) / (1 - Fraction(10) * Fraction(U))
    assert abs(gamma(10, U) - float(ref)) <= math.ulp(float(ref))
    with pytest.raises(DomainError):
        gamma(2**53, U)


def test_gamma_tilde():
    assert gamma_tilde(0, U, 3.0) == 0.0
    assert gamma_tilde(4, U, 1.0) == pytest.approx(reference_gamma_tilde(4, U, 1.0), rel=1e-10)
    assert gamma_tilde(4, U, 1.0) == pytest.approx(2 * U, rel=1e-10)
    assert gamma_tilde(1024, U, 6.0) == pytest.approx(6 * 32 * U, rel=1e-10)


@pytest.mark.parametrize("k", [64, 1024, 4096])
def test_gamma_tilde_below_gamma_at_scale(k):
    assert gamma_tilde(k, U, 6.0) < gamma(k, U)


def test_prob_P():
    assert prob_P(40.0, U) >= 1 - 1e-300
    assert prob_P(6.0, U) == pytest.approx(float(1 - 2 * _d(-18).exp()), abs=1e-12)
    assert prob_P(0.1, U) == pytest.approx(-0.990, abs=1e-3)
    with pytest.raises(DomainError):
        prob_P(0.0, U)


def test_prob_Q():
    assert prob_Q(6.0, 1, U) == prob_P(6.0, U)
    assert prob_Q(6.0, 1024 * 32**2, U) == pytest.approx(0.968, abs=1e-3)
    assert prob_Q(1.0, 1e6, U) < -1e5
    with pytest.raises(DomainError):
        prob_Q(6.0, 0, U)


def test_prob_Q_monotonicity():
    counts = [1, 10, 1e3, 1e5, 1e7]
    lams = [2.0, 4.0, 6.0, 8.0, 10.0]
    for lam in lams:
        failures = [prob_Q_failure(lam, N, U) for N in counts]
        assert all(a < b for a, b in zip(failures, failures[1:]))
    for N in counts:
        failures = [prob_Q_failure(lam, N, U) for lam in lams]
        assert all(a > b for a, b in zip(failures, failures[1:]))
        values = [prob_Q(lam, N, U) for lam in lams[:3]]
        assert all(a < b for a, b in zip(values, values[1:]))


def test_prob_Q_saturates_where_failure_mass_does_not():
    assert prob_Q(10.0, 1, U) == prob_Q(10.0, 10, U) == 1.0
    assert prob_Q_failure(10.0, 10, U) == pytest.approx(10 * prob_Q_failure(10.0, 1, U))
    assert prob_Q_failure(10.0, 1, U) == pytest.approx(2 * math.exp(-50), rel=1e-12)


def test_shift_deterministic():
    ref = float(11 * (1024 * 32 + 32 * 33) * Fraction(U))
    assert shift_deterministic(TABLE, U, 1.0) == pytest.approx(ref, rel=1e-15)
    assert shift_deterministic(TABLE, U, 1.0) == pytest.approx(4.1307e-11, rel=1e-4)
    assert shift_deterministic(TABLE, U, 0.0) == 0.0
    assert shift_deterministic(TABLE, U, 2.0) == 4 * shift_deterministic(TABLE, U, 1.0)
    with pytest.raises(DomainError):
        shift_deterministic(TABLE, U, -1.0)


def test_shift_randomized():
    s = shift_randomized(TABLE, U, 6.0, 1.0)
    assert s == pytest.approx(reference_shift_randomized(1024, 32, U, 6.0, 1.0), rel=1e-12)
    assert s == pytest.approx(8.850e-12, rel=1e-3)
    assert shift_randomized(TABLE, U, 6.0, 0.0) == 0.0
    assert s / shift_deterministic(TABLE, U, 1.0) == pytest.approx(0.214, abs=1e-3)


def test_shift_ordering_matches_closed_form():
    for m in (1, 2, 4, 16, 64, 1024, 4096):
        for n in (1, 2, 4, 32):
            if n > m:
                continue
            shape = ProblemShape(m, n)
            for lam in (0.5, 1.0, 6.0, 10.0):
                randomized_smaller = shift_randomized(shape, U, lam, 1.0) < shift_deterministic(
                    shape, U, 1.0
                )
                assert randomized_smaller == (lam * (math.sqrt(m) + math.sqrt(n + 1)) < m + n + 1)


def test_formulas_match_high_precision_references():
    grid = [
        (m, n, lam)
        for m in (128, 256, 1024, 4096, 65536)
        for n in (2, 8, 32, 64, 128)
        for lam in (1.0, 6.0)
    ]
    assert len(grid) == 50
    for m, n, lam in grid:
        shape = ProblemShape(m, n)
        assert gamma_tilde(m * n, U, lam) == pytest.approx(
            reference_gamma_tilde(m * n, U, lam), rel=1e-10
        )
        assert prob_Q(lam + 5, m * n**2, U) == pytest.approx(
            reference_prob_Q(lam + 5, m * n**2, U), rel=1e-10
        )
        assert shift_randomized(shape, U, lam, 0.5) == pytest.approx(
            reference_shift_randomized(m, n, U, lam, 0.5), rel=1e-10
        )
        assert shift_deterministic(shape, U, 0.5) == pytest.approx(
            float(11 * (m * n + n * (n + 1)) * Fraction(U) * Fraction(1, 4)), rel=1e-10
        )
        kappa = sufficient_kappa(Algorithm.SC3, shape, U, lam, 1.0, 1.0)
        ref = 1 / (86 * _d(lam) * (_d(m).sqrt() * n * _d(U) + _d(n + 1).sqrt() * n * _d(U)))
        assert kappa == pytest.approx(float(ref), rel=1e-10)


def test_check_settings_table_shape():
    report = check_settings(TABLE, U, 6.0)
    assert report.randomized_regime and report.deterministic_regime
    assert report.regime == "1/2200"
    gram_check, cholesky_check = report.checks[:2]
    assert gram_check.lhs == pytest.approx(1024 * 32 * U)
    assert cholesky_check.lhs == pytest.approx(6 * math.sqrt(33) * 32 * U)


def test_check_settings_violations():
    report = check_settings(ProblemShape(2**48, 2**10), U, 6.0)
    assert not report.checks[0].passed
    assert report.regime == "none"

    report = check_settings(TABLE, BINARY32.u, 6.0)
    assert not report.checks[0].passed
    assert not report.randomized_regime


def test_sufficient_kappa_values():
    sc3 = sufficient_kappa(Algorithm.SC3, TABLE, U, 6.0, 1.0, 1.0)
    three_c = sufficient_kappa(Algorithm.THREE_C, TABLE, U, 6.0, 1.0, 1.0)
    assert sc3 == pytest.approx(1.445e10, rel=1e-2)
    assert three_c == pytest.approx(1.696e12, rel=1e-2)
    cqr2 = sufficient_kappa(Algorithm.CHOLESKY_QR2, TABLE, U, 6.0, 1.0)
    assert cqr2 == pytest.approx(1 / (8 * math.sqrt(6 * 1207.8256 * U)), rel=1e-4)


@pytest.mark.parametrize("alg", [Algorithm.CHOLESKY_QR2, Algorithm.SC3, Algorithm.THREE_C])
def test_sufficient_kappa_grows_as_p1_shrinks(alg):
    values = [sufficient_kappa(alg, TABLE, U, 6.0, p1, 1.0) for p1 in (1.0, 0.5, 0.25)]
    assert values[0] < values[1] < values[2]


def test_sufficient_kappa_deterministic_variants():
    delta_limit = sufficient_kappa(Algorithm.CHOLESKY_QR2, TABLE, U, 6.0, 1.0, deterministic=True)
    assert 8 * delta_limit * math.sqrt((1024 * 32 + 32 * 33) * U) == pytest.approx(1.0)
    sc3 = sufficient_kappa(Algorithm.SC3, TABLE, U, 6.0, 0.5, deterministic=True)
    assert sc3 == pytest.approx(1 / (96 * 0.5 * (1024 * 32 + 32 * 33) * U))
    with pytest.raises(DomainError):
        sufficient_kappa(Algorithm.THREE_C, TABLE, U, 6.0, 1.0, deterministic=True)


def test_sufficient_kappa_rejects_bad_p():
    with pytest.raises(DomainError):
        sufficient_kappa(Algorithm.SC3, TABLE, U, 6.0, 1.5, 1.0)


def test_default_lambda():
    assert default_lambda(TABLE) == 6.0
    assert default_lambda(ProblemShape(4096, 64)) == 6.0
    assert default_lambda(ProblemShape(4096, 128)) == 8.0
    assert default_lambda(ProblemShape(8192, 8)) == 8.0


def test_theorem_probabilities():
    q = {alg: theorem_probability(alg, TABLE, 6.0, U) for alg in Algorithm if alg.pass_count > 1}
    q[Algorithm.SHIFTED_CHOLESKY_QR] = theorem_probability(
        Algorithm.SHIFTED_CHOLESKY_QR, TABLE, 6.0, U
    )
    assert 0 < q[Algorithm.SC3] == q[Algorithm.THREE_C] < q[Algorithm.CHOLESKY_QR2]
    assert q[Algorithm.CHOLESKY_QR2] < q[Algorithm.SHIFTED_CHOLESKY_QR] < 1
    with pytest.raises(DomainError):
        theorem_probability(Algorithm.CHOLESKY_QR, TABLE, 6.0, U)
    assert events_cholesky(ProblemShape(8, 2)) == pytest.approx(8 / 6 + 2 + 2 / 3)


def test_kappa_growth_and_shift_range():
    bound = kappa_growth_bound(TABLE, U, 6.0, 0.25, 1e12)
    t = 11 * 0.25**2 * 6.0 * (32 * 32 + math.sqrt(33) * 32) * U
    assert bound == pytest.approx(3.24 * math.sqrt(t) * 1e12)

    low, high = shift_range(TABLE, U, 6.0, 0.25, 1.0)
    assert high == 0.01
    assert low == pytest.approx(shift_randomized(TABLE, U, 6.0, 0.25))
