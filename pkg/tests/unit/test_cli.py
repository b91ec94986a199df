import argparse

import pytest

from src.cholqr import harness
from src.cholqr.cli import (
    EXIT_BREAKDOWN,
    EXIT_CONFIG,
    EXIT_OK,
    build_parser,
    config_from_args,
    main,
    parse_seeds,
)
from src.cholqr.exceptions import ConfigurationError, ConvergenceError
from src.cholqr.harness import parse_table
from src.utils.run_log import list_run_logs

SMALL = ["--algorithm", "SC3", "--m", "64", "--n", "4", "--kappa", "10,1e4", "--seeds", "1,2"]


def test_parse_seeds():
    assert parse_seeds("1..10") == list(range(1, 11))
    assert parse_seeds("3,5, 7") == [3, 5, 7]
    assert parse_seeds("4..4") == [4]
    for bad in ("5..1", "a,b", "1..x"):
        with pytest.raises(argparse.ArgumentTypeError):
            parse_seeds(bad)


def test_config_from_flags():
    config = config_from_args(build_parser().parse_args(SMALL + ["--shift-mode", "both"]))
    assert config.kappas == [10.0, 1e4]
    assert config.seeds == [1, 2]
    assert config.shift_modes == ["deterministic", "randomized"]
    assert config.lam == "auto"


def test_preset_with_overrides():
    args = build_parser().parse_args(["--preset", "table-sr", "--seeds", "1..2", "--lambda", "4"])
    config = config_from_args(args)
    assert config.seeds == [1, 2] and config.lam == 4.0
    assert config.name == "table-sr"


def test_s2_norm_flag_keeps_preset_default_unless_given():
    parse = build_parser().parse_args
    assert config_from_args(parse(["--preset", "table-3cb"])).s2_norm == "two"
    assert config_from_args(parse(["--preset", "table-3cb", "--s2-norm", "g"])).s2_norm == "g"
    assert config_from_args(parse(SMALL)).s2_norm == "g"


def test_missing_flags_without_preset():
    with pytest.raises(ConfigurationError):
        config_from_args(build_parser().parse_args(["--algorithm", "SC3"]))


def test_main_writes_csv_to_stdout_and_run_log(capsys):
    assert main(SMALL) == EXIT_OK
    records = parse_table(capsys.readouterr().out)
    assert len(records) == 4 and all(r.ok for r in records)

    logs = list_run_logs()
    assert len(logs) == 1
    assert logs.loc[0, "rows"] == 4 and logs.loc[0, "label"] == "SC3_64x4"


def test_main_markdown_to_file(tmp_path, capsys):
    out = tmp_path / "table.md"
    assert main(SMALL + ["--format", "markdown", "--out", str(out), "--no-run-log"]) == EXIT_OK
    assert "| Orthogonality |" in out.read_text()
    assert capsys.readouterr().out == ""
    assert list_run_logs().empty


def test_main_configuration_error(capsys):
    assert main(["--algorithm", "SC3", "--m", "4", "--n", "8", "--kappa", "10"]) == EXIT_CONFIG
    assert "error:" in capsys.readouterr().err
    assert main(SMALL + ["--workers", "0"]) == EXIT_CONFIG


def test_main_reports_breakdown():
    argv = ["--algorithm", "CholeskyQR2", "--m", "1024", "--n", "32", "--kappa", "1e10"]
    assert main(argv + ["--seeds", "1", "--no-run-log"]) == EXIT_BREAKDOWN


def test_main_reports_convergence_failure(monkeypatch, capsys):
    def fail(*args, **kwargs):
        raise ConvergenceError("Jacobi did not converge", sweeps=50, off_norm=1e-3)

    monkeypatch.setattr(harness, "run_pipeline", fail)
    assert main(SMALL + ["--no-run-log"]) == EXIT_BREAKDOWN
    assert "error:convergence" in capsys.readouterr().out
