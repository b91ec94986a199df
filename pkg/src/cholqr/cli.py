"""Command-line entry point: `python -m src.cholqr --preset table-sr --format markdown`."""

import argparse
import logging
import sys
from pathlib import Path

from src.cholqr.error_model import Algorithm
from src.cholqr.exceptions import CholQRError, ConfigurationError
from src.cholqr.harness import PRESETS, SEEDS, emit_table, make_config, preset, run_experiment
from src.utils.run_log import write_run_log
from src.utils.settings import configure_logging

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_BREAKDOWN = 2


def parse_seeds(text: str) -> list[int]:
    """'1..10' (inclusive range) or a comma list '3,5,7'."""
    text = text.strip()
    try:
        if ".." in text:
            first, last = (int(v) for v in text.split("..", 1))
            if last < first:
                raise ValueError
            return list(range(first, last + 1))
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}; use S1..S2 or S1,S2,...")


def parse_kappas(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad kappa list {text!r}")


def parse_lambda(text: str) -> float | str:
    if text == "auto":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"lambda must be a number or 'auto', got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cholqr",
        description="Run CholeskyQR-family experiments and print result tables.",
    )
    parser.add_argument("--preset", choices=sorted(PRESETS), help="named experiment")
    parser.add_argument("--algorithm", help=f"one of {[a.value for a in Algorithm]}")
    parser.add_argument("--m", type=int)
    parser.add_argument("--n", type=int)
    parser.add_argument("--kappa", type=parse_kappas, help="comma-separated list")
    parser.add_argument(
        "--shift-mode", choices=["deterministic", "randomized", "both"], default="randomized"
    )
    parser.add_argument("--lambda", dest="lam", type=parse_lambda, help="number or auto")
    parser.add_argument("--seeds", type=parse_seeds, help="S1..S2 or S1,S2,... (default 1..10)")
    parser.add_argument("--precision", choices=["f64", "f32"], default="f64")
    parser.add_argument(
        "--format", dest="output_format", choices=["csv", "markdown"], default="csv"
    )
    parser.add_argument("--out", help="write the table here instead of stdout")
    parser.add_argument("--workers", type=int, help="cell-level threads (default: CHOLQR_WORKERS)")
    parser.add_argument("--timing", action="store_true", help="record wall_time_ms per cell")
    parser.add_argument(
        "--s2-norm", choices=["g", "two"], help="norm for the 3C s2 (default: g, or the preset's)"
    )
    parser.add_argument("--run-log-dir", help="run-log directory (default: CHOLQR_RUN_LOG_DIR)")
    parser.add_argument("--no-run-log", action="store_true", help="do not write to the run log")
    parser.add_argument("--debug", action="store_true", default=None)
    return parser


def _shift_modes(choice: str) -> list[str]:
    return ["deterministic", "randomized"] if choice == "both" else [choice]


def config_from_args(args: argparse.Namespace):
    common = dict(
        precision=args.precision,
        output_path=args.out,
        output_format=args.output_format,
        record_timing=args.timing,
    )
    overrides = {
        key: getattr(args, key)
        for key in ("lam", "seeds", "s2_norm")
        if getattr(args, key) is not None
    }
    if args.preset:
        return preset(args.preset, **common, **overrides)

    missing = [flag for flag in ("algorithm", "m", "n", "kappa") if getattr(args, flag) is None]
    if missing:
        raise ConfigurationError(
            "without --preset these flags are required: " + ", ".join(f"--{f}" for f in missing)
        )
    return make_config(
        name=f"{args.algorithm}_{args.m}x{args.n}",
        shapes=[(args.m, args.n)],
        kappas=args.kappa,
        algorithms=[args.algorithm],
        shift_modes=_shift_modes(args.shift_mode),
        **{"lam": "auto", "seeds": SEEDS, **overrides},
        **common,
    )


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.debug)

    try:
        config = config_from_args(args)
        if args.workers is not None and args.workers < 1:
            raise ConfigurationError(f"--workers must be >= 1, got {args.workers}")
    except CholQRError as e:
        logging.error(str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    records = run_experiment(config, workers=args.workers)
    table = emit_table(records, config.output_format, axis=config.table_axis)

    if config.output_path:
        Path(config.output_path).write_text(table, newline="")
        logging.info(f"Wrote {config.output_format} table to {config.output_path}")
    else:
        sys.stdout.write(table)

    if not args.no_run_log:
        csv_text = table if config.output_format == "csv" else emit_table(records, "csv")
        write_run_log(csv_text, config.model_dump(mode="json"), config.name, args.run_log_dir)

    return EXIT_BREAKDOWN if any(not record.ok for record in records) else EXIT_OK
