"""Experiment driver: sweep (shape x algorithm x shift mode x kappa x seed) cells.

Cells are independent; they may run on a thread pool, and the records are
always returned in the same sorted order so the emitted tables do not
depend on scheduling.
"""

import io
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from functools import lru_cache
from typing import Literal

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.cholqr.algorithms import run_pipeline
from src.cholqr.error_model import (
    LAMBDA_MAX,
    Algorithm,
    ProblemShape,
    ShiftMode,
    ShiftStrategy,
    check_settings,
    default_lambda,
    precision_from_name,
)
from src.cholqr.exceptions import BreakdownError, ConfigurationError, ConvergenceError
from src.cholqr.linalg_core import freeze
from src.cholqr.matrixgen import KAPPA_MAX, generate
from src.cholqr.metrics import ReportContext, make_report
from src.utils.settings import get_settings

CSV_COLUMNS = [
    "m",
    "n",
    "kappa",
    "algorithm",
    "shift_mode",
    "lambda",
    "seed",
    "status",
    "orthogonality",
    "residual_abs",
    "residual_rel",
    "p1",
    "p2",
    "p3",
    "shift_s1",
    "shift_s2",
    "bound_orth",
    "bound_resid",
    "wall_time_ms",
]
NA = "na"
NO_SHIFT = "none"
CONVERGENCE_FAILURE = "error:convergence"
MISSING_CELL = "−"
TALL_RATIO = 4

SEEDS = list(range(1, 11))
KAPPAS_SC3 = [1e8, 1e10, 1e12, 1e14, 1e15]
KAPPAS_3C = [1e8, 1e10, 1e12, 1e14, 5e15]
N_SWEEP = [128, 256, 512, 1024, 2048]
M_SWEEP = [256, 512, 1024, 2048, 4096]


class ExperimentConfig(BaseModel):
    """A validated sweep. Every field is checked before any matrix is built."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = "custom"
    shapes: list[tuple[int, int]]
    kappas: list[float]
    algorithms: list[Algorithm]
    shift_modes: list[str] = Field(default_factory=lambda: [ShiftMode.RANDOMIZED.value])
    lam: float | Literal["auto"] = "auto"
    seeds: list[int]
    precision: Literal["f64", "f32"] = "f64"
    output_path: str | None = None
    output_format: Literal["csv", "markdown"] = "csv"
    s2_norm: Literal["g", "two"] = "g"
    record_timing: bool = False
    table_axis: Literal["kappa", "n", "m"] = "kappa"

    @field_validator("shapes", "kappas", "algorithms", "seeds", "shift_modes")
    @classmethod
    def _nonempty(cls, value, info):
        if not value:
            raise ValueError(f"{info.field_name} must not be empty")
        return value

    @field_validator("algorithms", mode="before")
    @classmethod
    def _parse_algorithms(cls, value):
        return [Algorithm.parse(v) if isinstance(v, str) else v for v in value]

    @field_validator("shapes")
    @classmethod
    def _check_shapes(cls, value):
        for m, n in value:
            if not m >= n >= 2:
                raise ValueError(f"shape {m}x{n} must satisfy m >= n >= 2")
        return value

    @field_validator("kappas")
    @classmethod
    def _check_kappas(cls, value):
        for kappa in value:
            if not 1.0 <= kappa <= KAPPA_MAX:
                raise ValueError(f"kappa {kappa} outside [1, {KAPPA_MAX:g}]")
        return value

    @field_validator("lam")
    @classmethod
    def _check_lam(cls, value):
        if value != "auto" and not 0.0 < value <= LAMBDA_MAX:
            raise ValueError(f"lambda must satisfy 0 < lambda <= {LAMBDA_MAX:g}, got {value}")
        return value

    @field_validator("shift_modes")
    @classmethod
    def _check_shift_modes(cls, value):
        allowed = {mode.value for mode in ShiftMode}
        for token in value:
            parts = token.split("+")
            if len(parts) > 2 or any(part not in allowed for part in parts):
                raise ValueError(f"unknown shift mode {token!r}")
        return value

    @model_validator(mode="after")
    def _check_axis(self):
        if self.table_axis == "n" and len({m for m, _ in self.shapes}) > 1:
            raise ValueError("an n sweep needs a single m")
        if self.table_axis == "m" and len({n for _, n in self.shapes}) > 1:
            raise ValueError("an m sweep needs a single n")
        return self

    def lambda_for(self, m: int, n: int) -> float:
        return default_lambda(ProblemShape(m, n)) if self.lam == "auto" else float(self.lam)

    def shift_modes_for(self, algorithm: Algorithm) -> list[str]:
        """Shift-mode labels the cells of `algorithm` run with."""
        if algorithm.shift_count == 0:
            return [NO_SHIFT]
        if algorithm.shift_count == 1:
            labels = [token.split("+")[0] for token in self.shift_modes]
        else:
            labels = [token if "+" in token else f"{token}+{token}" for token in self.shift_modes]
        return list(dict.fromkeys(labels))


def make_config(**kwargs) -> ExperimentConfig:
    """Build an ExperimentConfig, reporting validation problems as ConfigurationError."""
    try:
        return ExperimentConfig(**kwargs)
    except ValidationError as e:
        logging.error(f"Invalid experiment configuration: {e}")
        raise ConfigurationError(f"Invalid experiment configuration: {e}") from e


@dataclass(frozen=True)
class Cell:
    m: int
    n: int
    kappa: float
    algorithm: Algorithm
    shift_mode: str
    lam: float
    seed: int

    def sort_key(self):
        return (self.m, self.n, self.algorithm.value, self.shift_mode, self.kappa, self.seed)


@dataclass(frozen=True)
class ExperimentRecord:
    m: int
    n: int
    kappa: float
    algorithm: str
    shift_mode: str
    lam: float
    seed: int
    status: str
    orthogonality: float | None = None
    residual_abs: float | None = None
    residual_rel: float | None = None
    p1: float | None = None
    p2: float | None = None
    p3: float | None = None
    shift_s1: float | None = None
    shift_s2: float | None = None
    bound_orth: float | None = None
    bound_resid: float | None = None
    wall_time_ms: float | None = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def bound_satisfied(self) -> tuple[bool | None, bool | None]:
        if not self.ok:
            return None, None
        return (
            None if self.bound_orth is None else self.orthogonality <= self.bound_orth,
            None if self.bound_resid is None else self.residual_abs <= self.bound_resid,
        )

    def as_row(self) -> dict:
        row = asdict(self)
        row["lambda"] = row.pop("lam")
        return {column: row[column] for column in CSV_COLUMNS}


def cells(config: ExperimentConfig) -> list[Cell]:
    """Expand a configuration into its cells, in emission order."""
    expanded = [
        Cell(m, n, float(kappa), algorithm, shift_mode, config.lambda_for(m, n), seed)
        for m, n in config.shapes
        for algorithm in config.algorithms
        for shift_mode in config.shift_modes_for(algorithm)
        for kappa in config.kappas
        for seed in config.seeds
    ]
    return sorted(set(expanded), key=Cell.sort_key)


@lru_cache(maxsize=64)
def _generated_matrix(m: int, n: int, kappa: float, seed: int, dtype: str) -> np.ndarray:
    T = generate(m, n, kappa, seed).matrix
    return T if T.dtype == np.dtype(dtype) else freeze(T.astype(dtype, order="F"))


def _strategies(cell: Cell, precision) -> tuple[ShiftStrategy | None, ShiftStrategy | None]:
    if cell.shift_mode == NO_SHIFT:
        return None, None
    modes = [ShiftMode(part) for part in cell.shift_mode.split("+")]
    strategies = [
        ShiftStrategy(mode, cell.lam if mode is ShiftMode.RANDOMIZED else None, precision)
        for mode in modes
    ]
    return strategies[0], strategies[1] if len(strategies) > 1 else None


def run_cell(cell: Cell, config: ExperimentConfig) -> ExperimentRecord:
    """Generate, factorize and measure one cell.

    Breakdowns and eigenvalue solves that fail to converge become records.
    """
    precision = precision_from_name(config.precision)
    T = _generated_matrix(cell.m, cell.n, cell.kappa, cell.seed, precision.dtype.name)
    strategy1, strategy2 = _strategies(cell, precision)
    base = dict(
        m=cell.m,
        n=cell.n,
        kappa=cell.kappa,
        algorithm=cell.algorithm.value,
        shift_mode=cell.shift_mode,
        lam=cell.lam,
        seed=cell.seed,
    )

    context = ReportContext(
        algorithm=cell.algorithm,
        precision=precision,
        lam=cell.lam,
        deterministic_shift=ShiftMode.DETERMINISTIC.value in cell.shift_mode.split("+"),
    )
    start = time.perf_counter()
    try:
        result = run_pipeline(cell.algorithm, T, strategy1, strategy2, s2_norm=config.s2_norm)
        elapsed_ms = (time.perf_counter() - start) * 1000.0
        report = make_report(result, T, context)
    except BreakdownError as e:
        s1, s2 = e.trace.shifts() if e.trace is not None else (None, None)
        return ExperimentRecord(
            **base, status=f"breakdown:stage_{e.stage_index}", shift_s1=s1, shift_s2=s2
        )
    except ConvergenceError as e:
        logging.error(f"Cell {cell} failed after {e.sweeps} Jacobi sweeps: {e}")
        return ExperimentRecord(**base, status=CONVERGENCE_FAILURE)

    s1, s2 = result.trace.shifts()
    logging.debug(f"Cell done: {cell}, orth={report.orthogonality:.3e}")
    return ExperimentRecord(
        **base,
        status="ok",
        orthogonality=report.orthogonality,
        residual_abs=report.residual_abs,
        residual_rel=report.residual_rel,
        p1=report.p1,
        p2=report.p2,
        p3=report.p3,
        shift_s1=s1,
        shift_s2=s2,
        bound_orth=report.bound_orth,
        bound_resid=report.bound_resid,
        wall_time_ms=elapsed_ms if config.record_timing else None,
    )


def run_experiment(config: ExperimentConfig, workers: int | None = None) -> list[ExperimentRecord]:
    """Run every cell of `config`; the result order is independent of `workers`."""
    workers = workers or get_settings().workers
    precision = precision_from_name(config.precision)
    for m, n in config.shapes:
        if m < TALL_RATIO * n:
            logging.warning(f"Shape {m}x{n} is not tall-skinny (m < {TALL_RATIO}n)")
        check_settings(ProblemShape(m, n), precision.u, config.lambda_for(m, n))

    todo = cells(config)
    logging.info(f"Running {len(todo)} cells of '{config.name}' on {workers} worker(s)")
    if workers == 1:
        records = [run_cell(cell, config) for cell in todo]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(lambda cell: run_cell(cell, config), todo))

    broken = sum(not record.ok for record in records)
    if broken:
        logging.info(f"{broken} of {len(records)} cells broke down")
    return records


def records_frame(records: list[ExperimentRecord]) -> pd.DataFrame:
    frame = pd.DataFrame([record.as_row() for record in records], columns=CSV_COLUMNS)
    # metric columns stay float even when every record lacks them
    metrics = CSV_COLUMNS[CSV_COLUMNS.index("orthogonality") :]
    frame[metrics] = frame[metrics].astype(float)
    return frame


def _csv(records: list[ExperimentRecord]) -> str:
    return records_frame(records).to_csv(
        index=False, float_format="%.17g", na_rep=NA, lineterminator="\n"
    )


def parse_table(text: str) -> list[ExperimentRecord]:
    """Inverse of the CSV emitter."""
    frame = pd.read_csv(
        io.StringIO(text),
        na_values=[NA],
        keep_default_na=False,
        float_precision="round_trip",
        dtype={"algorithm": str, "shift_mode": str, "status": str},
    )
    if list(frame.columns) != CSV_COLUMNS:
        raise ConfigurationError(f"Unexpected CSV columns: {list(frame.columns)}")
    records = []
    int_columns = {"m", "n", "seed"}
    float_columns = {f.name for f in fields(ExperimentRecord)} - int_columns
    for row in frame.to_dict(orient="records"):
        row["lam"] = row.pop("lambda")
        for key, value in row.items():
            if key in int_columns:
                row[key] = int(value)
            elif key in ("algorithm", "shift_mode", "status"):
                row[key] = str(value)
            elif key in float_columns:
                row[key] = None if value is None or math.isnan(value) else float(value)
        records.append(ExperimentRecord(**row))
    return records


def _axis_label(axis: str, value) -> str:
    if axis == "kappa":
        return f"κ₂(T)={value:.0e}"
    return f"{axis}={int(value)}"


def _markdown_group(frame: pd.DataFrame, axis: str) -> list[str]:
    axis_values = sorted(frame[axis].unique())
    ok = frame[frame["status"] == "ok"]
    rows = [("Orthogonality", "orthogonality", "{:.2e}"), ("Residual", "residual_abs", "{:.2e}")]
    rows += [(p, p, "{:.4f}") for p in ("p1", "p2", "p3") if frame[p].notna().any()]

    lines = [
        "| | " + " | ".join(_axis_label(axis, v) for v in axis_values) + " |",
        "|---" * (len(axis_values) + 1) + "|",
    ]
    for title, column, fmt in rows:
        medians = ok.groupby(axis)[column].median()
        cells = [
            fmt.format(medians[v]) if v in medians.index and pd.notna(medians[v]) else MISSING_CELL
            for v in axis_values
        ]
        lines.append(f"| {title} | " + " | ".join(cells) + " |")
    totals = frame.groupby(axis)["status"].agg(lambda s: f"{(s != 'ok').sum()}/{len(s)}")
    lines.append("| Breakdowns | " + " | ".join(totals[v] for v in axis_values) + " |")
    return lines


def _markdown(records: list[ExperimentRecord], axis: str) -> str:
    frame = records_frame(records)
    lines = []
    for (algorithm, shift_mode), group in frame.groupby(["algorithm", "shift_mode"], sort=False):
        title = algorithm if shift_mode == NO_SHIFT else f"{algorithm} ({shift_mode} s)"
        fixed = group.drop_duplicates(["m", "n"])[["m", "n"]].to_numpy()
        if axis == "kappa" and len(fixed) == 1:
            title += f", {fixed[0][0]}x{fixed[0][1]}"
        lines += [f"### {title}", ""] + _markdown_group(group, axis) + [""]
    return "\n".join(lines)


def emit_table(
    records: list[ExperimentRecord], output_format: str = "csv", axis: str = "kappa"
) -> str:
    """Render records as CSV (17 significant digits, "na" for missing) or Markdown medians."""
    if not records:
        raise ConfigurationError("emit_table needs at least one record")
    if output_format == "csv":
        return _csv(records)
    if output_format == "markdown":
        return _markdown(records, axis)
    raise ConfigurationError(f"Unknown output format {output_format!r}")


def _sc3_sweep(name: str, shift_modes: list[str], **overrides) -> dict:
    config = dict(
        name=name,
        shapes=[(1024, 32)],
        kappas=KAPPAS_SC3,
        algorithms=[Algorithm.SC3],
        shift_modes=shift_modes,
        lam=6.0,
        seeds=SEEDS,
    )
    config.update(overrides)
    return config


def _three_c_sweep(name: str, shift_mode: str, **overrides) -> dict:
    return _sc3_sweep(
        name,
        [shift_mode],
        algorithms=[Algorithm.THREE_C],
        **{"kappas": KAPPAS_3C, **overrides},
    )


def _n_sweep(**overrides) -> dict:
    shapes = [(4096, n) for n in N_SWEEP]
    return dict(shapes=shapes, kappas=[1e12], lam=8.0, table_axis="n", **overrides)


def _m_sweep(**overrides) -> dict:
    shapes = [(m, 128) for m in M_SWEEP]
    return dict(shapes=shapes, kappas=[1e12], lam=8.0, table_axis="m", **overrides)


PRESETS = {
    "table-sr": lambda: _sc3_sweep("table-sr", ["randomized"]),
    "table-sc": lambda: _sc3_sweep("table-sc", ["deterministic"]),
    "table-3cb": lambda: _three_c_sweep("table-3cb", "randomized+randomized", s2_norm="two"),
    "table-3cs": lambda: _three_c_sweep("table-3cs", "deterministic+randomized"),
    "table-3cc": lambda: _three_c_sweep("table-3cc", "deterministic+deterministic"),
    "table-com": lambda: _sc3_sweep(
        "table-com",
        ["randomized"],
        algorithms=[Algorithm.SC3, Algorithm.THREE_C],
        kappas=[5e15],
    ),
    "table-pc": lambda: _sc3_sweep("table-pc", ["randomized"]),
    "table-pn": lambda: _sc3_sweep("table-pn", ["randomized"], **_n_sweep()),
    "table-pm": lambda: _sc3_sweep("table-pm", ["randomized"], **_m_sweep()),
    "table-3cp": lambda: _three_c_sweep("table-3cp", "randomized+randomized", kappas=KAPPAS_SC3),
    "table-3cp-n": lambda: _three_c_sweep("table-3cp-n", "randomized+randomized", **_n_sweep()),
    "table-3cp-m": lambda: _three_c_sweep("table-3cp-m", "randomized+randomized", **_m_sweep()),
}


def preset(name: str, **overrides) -> ExperimentConfig:
    """Configuration of a named experiment; keyword overrides replace preset fields."""
    if name not in PRESETS:
        raise ConfigurationError(f"Unknown preset {name!r}; expected one of {sorted(PRESETS)}")
    logging.info(f"Using preset {name}")
    return make_config(**{**PRESETS[name](), **overrides})
