"""Run-log directory: one CSV per harness invocation plus a JSON-lines config echo."""

import json
import logging
from datetime import datetime
from pathlib import Path

import pandas as pd

from src.utils.settings import get_settings

CONFIG_LOG = "configs.jsonl"


def _run_log_dir(directory: str | Path | None) -> Path:
    return Path(directory) if directory is not None else get_settings().run_log_dir


def write_run_log(
    csv_text: str, config: dict, label: str, directory: str | Path | None = None
) -> Path:
    """Store a CSV table and append its configuration to configs.jsonl.

    Returns:
        Path of the CSV file that was written.
    """
    directory = _run_log_dir(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    path = directory / f"{stamp}_{label}.csv"
    suffix = 1
    while path.exists():
        path = directory / f"{stamp}_{label}_{suffix}.csv"
        suffix += 1
    path.write_text(csv_text, newline="")

    entry = {"file": path.name, "label": label, "created": stamp, "config": config}
    with (directory / CONFIG_LOG).open("a") as f:
        f.write(json.dumps(entry, sort_keys=True, default=str) + "\n")
    logging.info(f"Wrote run log {path}")
    return path


def list_run_logs(directory: str | Path | None = None) -> pd.DataFrame:
    """Run logs joined with their config echoes, newest first."""
    directory = _run_log_dir(directory)
    columns = ["file", "label", "created", "rows", "config"]
    if not directory.exists():
        logging.debug(f"Run log directory {directory} does not exist")
        return pd.DataFrame(columns=columns)

    echoes = {}
    config_log = directory / CONFIG_LOG
    if config_log.exists():
        for line in config_log.read_text().splitlines():
            if not line.strip():
                continue
            try:
                entry = json.loads(line)
            except json.JSONDecodeError:
                logging.warning(f"Skipping malformed line in {config_log}")
                continue
            echoes[entry.get("file")] = entry

    rows = []
    for path in sorted(directory.glob("*.csv"), reverse=True):
        entry = echoes.get(path.name, {})
        with path.open() as f:
            line_count = sum(1 for _ in f) - 1
        rows.append(
            {
                "file": path.name,
                "label": entry.get("label", path.stem),
                "created": entry.get("created", ""),
                "rows": max(line_count, 0),
                "config": entry.get("config"),
            }
        )
    return pd.DataFrame(rows, columns=columns)


def read_run_log(name: str, directory: str | Path | None = None) -> str:
    path = _run_log_dir(directory) / name
    if path.suffix != ".csv" or not path.is_file():
        raise FileNotFoundError(f"No run log named {name} in {path.parent}")
    return path.read_text()
