import math

import pytest

from src.cholqr import harness
from src.cholqr.error_model import Algorithm
from src.cholqr.exceptions import ConfigurationError, ConvergenceError
from src.cholqr.harness import (
    CONVERGENCE_FAILURE,
    CSV_COLUMNS,
    MISSING_CELL,
    PRESETS,
    ExperimentRecord,
    cells,
    emit_table,
    make_config,
    parse_table,
    preset,
    run_experiment,
)


def small_config(**overrides):
    config = dict(shapes=[(64, 4)], kappas=[10.0], algorithms=["SC3"], seeds=[1])
    config.update(overrides)
    return make_config(**config)


def breakdown_record(kappa=1e15, seed=1):
    return ExperimentRecord(
        m=1024,
        n=32,
        kappa=kappa,
        algorithm="SC3",
        shift_mode="deterministic",
        lam=6.0,
        seed=seed,
        status="breakdown:stage_2",
        shift_s1=1e-12,
    )


def ok_record(kappa=1e14, seed=1, orthogonality=2e-15):
    return ExperimentRecord(
        m=1024,
        n=32,
        kappa=kappa,
        algorithm="SC3",
        shift_mode="deterministic",
        lam=6.0,
        seed=seed,
        status="ok",
        orthogonality=orthogonality,
        residual_abs=3e-16,
        residual_rel=5e-17,
        p1=0.25,
        p2=1.0,
        p3=1.0,
        shift_s1=1e-12,
        bound_orth=2e-11,
        bound_resid=6e-13,
    )


@pytest.mark.parametrize(
    "overrides",
    [
        {"kappas": []},
        {"seeds": []},
        {"shapes": [(4, 8)]},
        {"kappas": [1e17]},
        {"lam": 0.0},
        {"lam": 11.0},
        {"algorithms": ["householder"]},
        {"shift_modes": ["column"]},
        {"shapes": [(64, 4), (128, 4)], "table_axis": "n"},
        {"unknown_field": 1},
    ],
)
def test_invalid_configurations(overrides):
    with pytest.raises(ConfigurationError):
        small_config(**overrides)


def test_lambda_auto_and_explicit():
    assert small_config(shapes=[(1024, 32)]).lambda_for(1024, 32) == 6.0
    assert small_config(lam=2.5).lambda_for(1024, 32) == 2.5


def test_shift_mode_expansion():
    config = small_config(shift_modes=["randomized", "deterministic+randomized"])
    assert config.shift_modes_for(Algorithm.CHOLESKY_QR2) == ["none"]
    assert config.shift_modes_for(Algorithm.SC3) == ["randomized", "deterministic"]
    assert config.shift_modes_for(Algorithm.THREE_C) == [
        "randomized+randomized",
        "deterministic+randomized",
    ]


def test_cells_are_sorted_and_unique():
    config = small_config(kappas=[1e4, 10.0, 1e4], seeds=[2, 1], algorithms=["3C", "CholeskyQR2"])
    expanded = cells(config)
    assert len(expanded) == 2 * 2 * 2
    assert expanded == sorted(expanded, key=lambda c: c.sort_key())
    assert expanded[0].algorithm is Algorithm.THREE_C and expanded[0].kappa == 10.0


def test_presets():
    config = preset("table-sr")
    assert config.algorithms == [Algorithm.SC3]
    assert config.shapes == [(1024, 32)] and config.lam == 6.0
    assert config.kappas == [1e8, 1e10, 1e12, 1e14, 1e15]
    assert len(cells(config)) == 50

    assert preset("table-3cb").shift_modes == ["randomized+randomized"]
    assert preset("table-3cb").s2_norm == "two" and preset("table-3cs").s2_norm == "g"
    assert preset("table-pn").table_axis == "n"
    assert preset("table-sr", seeds=[1]).seeds == [1]
    assert all(preset(name).name == name for name in PRESETS)
    with pytest.raises(ConfigurationError):
        preset("table-9")


def test_single_ok_record_csv():
    records = run_experiment(small_config())
    assert [r.status for r in records] == ["ok"]
    text = emit_table(records, "csv")
    lines = text.split("\n")
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 3 and lines[2] == ""
    row = dict(zip(CSV_COLUMNS, lines[1].split(",")))
    assert row["wall_time_ms"] == "na" and row["shift_s2"] == "na"
    assert row["algorithm"] == "SC3" and row["shift_mode"] == "randomized"


def test_csv_round_trip():
    records = run_experiment(small_config(algorithms=["SC3", "3C", "CholeskyQR"], seeds=[1, 2]))
    records.append(breakdown_record())
    assert parse_table(emit_table(records, "csv")) == records


def test_csv_is_byte_identical_across_runs_and_workers():
    config = small_config(algorithms=["SC3", "3C"], kappas=[10.0, 1e6], seeds=[1, 2, 3])
    first = emit_table(run_experiment(config, workers=1), "csv")
    assert emit_table(run_experiment(config, workers=1), "csv") == first
    assert emit_table(run_experiment(config, workers=4), "csv") == first


def test_timing_is_opt_in():
    (record,) = run_experiment(small_config(record_timing=True))
    assert record.wall_time_ms is not None and record.wall_time_ms >= 0
    (record,) = run_experiment(small_config())
    assert record.wall_time_ms is None


def test_breakdowns_become_records():
    config = small_config(shapes=[(1024, 32)], kappas=[1e10], algorithms=["CholeskyQR2"])
    (record,) = run_experiment(config)
    assert record.status == "breakdown:stage_1"
    assert record.orthogonality is None and record.p1 is None
    assert record.bound_satisfied == (None, None)


def test_convergence_failures_become_records(monkeypatch):
    def fail(*args, **kwargs):
        raise ConvergenceError("Jacobi did not converge", sweeps=50, off_norm=1e-3)

    monkeypatch.setattr(harness, "run_pipeline", fail)
    records = run_experiment(small_config(seeds=[1, 2]))
    assert [r.status for r in records] == [CONVERGENCE_FAILURE] * 2
    assert not records[0].ok and records[0].orthogonality is None
    assert "| Breakdowns | 2/2 |" in emit_table(records, "markdown")


def test_three_c_with_column_based_shift_has_no_bounds():
    config = small_config(algorithms=["3C"], shift_modes=["deterministic+randomized"])
    (record,) = run_experiment(config)
    assert record.ok
    assert record.bound_orth is None and record.bound_resid is None
    assert record.bound_satisfied == (None, None)

    (record,) = run_experiment(small_config(algorithms=["3C"]))
    assert record.bound_orth is not None


def test_binary32_cells():
    (record,) = run_experiment(small_config(precision="f32", kappas=[100.0]))
    assert record.ok
    assert record.orthogonality <= 1e-4


def test_markdown_medians_and_missing_cells():
    records = [ok_record(seed=s, orthogonality=v) for s, v in ((1, 1e-15), (2, 3e-15), (3, 2e-15))]
    records += [breakdown_record(seed=s) for s in (1, 2, 3)]
    text = emit_table(records, "markdown")
    assert "### SC3 (deterministic s), 1024x32" in text
    assert "| | κ₂(T)=1e+14 | κ₂(T)=1e+15 |" in text
    assert f"| Orthogonality | 2.00e-15 | {MISSING_CELL} |" in text
    assert f"| p1 | 0.2500 | {MISSING_CELL} |" in text
    assert "| Breakdowns | 0/3 | 3/3 |" in text


def test_markdown_all_breakdowns():
    text = emit_table([breakdown_record()], "markdown")
    assert f"| Orthogonality | {MISSING_CELL} |" in text
    assert "| p1 |" not in text


def test_markdown_n_axis():
    records = [
        ExperimentRecord(**{**ok_record().__dict__, "m": 4096, "n": n, "kappa": 1e12})
        for n in (128, 256)
    ]
    text = emit_table(records, "markdown", axis="n")
    assert "| | n=128 | n=256 |" in text


def test_emit_table_errors():
    with pytest.raises(ConfigurationError):
        emit_table([], "csv")
    with pytest.raises(ConfigurationError):
        emit_table([ok_record()], "json")


def test_parse_table_rejects_foreign_columns():
    with pytest.raises(ConfigurationError):
        parse_table("a,b\n1,2\n")


def test_bound_satisfied_from_record():
    assert ok_record().bound_satisfied == (True, True)
    assert ok_record(orthogonality=1.0).bound_satisfied == (False, True)
    assert math.isclose(ok_record().as_row()["lambda"], 6.0)
