import numpy as np
import pytest

from src.cholqr.matrixgen import generate
from src.utils.settings import get_settings

U = 2.0**-53


@pytest.fixture(autouse=True)
def isolated_settings(monkeypatch, tmp_path):
    """Point the run log at a temp dir and drop cached settings around each test."""
    monkeypatch.setenv("CHOLQR_RUN_LOG_DIR", str(tmp_path / "runs"))
    monkeypatch.delenv("CHOLQR_WORKERS", raising=False)
    monkeypatch.delenv("CHOLQR_JACOBI_MAX_DIM", raising=False)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def u():
    return U


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def orthonormal_columns():
    return generate(64, 8, 1.0, seed=3).matrix


@pytest.fixture
def table_matrix():
    """1024 x 32 test matrix at kappa 1e12, the shape of the reference sweeps."""
    return generate(1024, 32, 1e12, seed=42)
