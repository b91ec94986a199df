"""Process settings read from the environment (and an optional .env file)."""

import logging
import os
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

from dotenv import load_dotenv


@dataclass(frozen=True)
class Settings:
    debug: bool
    run_log_dir: Path
    workers: int
    jacobi_max_dim: int


def _env_flag(name: str, default: bool = False) -> bool:
    value = os.getenv(name)
    if value is None:
        return default
    return value.strip().lower() in ("1", "true", "yes", "on")


def _env_int(name: str, default: int, minimum: int = 1) -> int:
    value = os.getenv(name)
    if value is None or not value.strip():
        return default
    try:
        parsed = int(value)
    except ValueError:
        raise ValueError(f"Error reading setting {name}: {value!r} is not an integer")
    if parsed < minimum:
        raise ValueError(f"Error reading setting {name}: must be >= {minimum}, got {parsed}")
    return parsed


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Get the cached process settings.

    Loads a .env file from the working directory if one exists; real
    environment variables take precedence over it.
    """
    load_dotenv()
    settings = Settings(
        debug=_env_flag("DEBUG"),
        run_log_dir=Path(os.getenv("CHOLQR_RUN_LOG_DIR", "runs")),
        workers=_env_int("CHOLQR_WORKERS", 1),
        jacobi_max_dim=_env_int("CHOLQR_JACOBI_MAX_DIM", 64, minimum=2),
    )
    logging.debug(f"Loaded settings: {settings}")
    return settings


def configure_logging(debug: bool | None = None) -> None:
    """Configure the root logger for an entry point."""
    if debug is None:
        debug = get_settings().debug
    logging.basicConfig(
        level=logging.DEBUG if debug else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    if debug:
        logging.getLogger("watchdog").setLevel(logging.INFO)
