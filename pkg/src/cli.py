"""
Command-line entry point.

    python -m src.cli run configs/fig2_left.toml [--workers N | --serial]
    python -m src.cli figure fig3 [--out DIR] [--reps N] [--seed S] [--workers N]
    python -m src.cli selftest
    python -m src.cli serve

Exit codes: 0 on success, 2 on configuration errors, 3 on numerical failures.
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional

from src.config import config
from src.utils.errors import ErmError
from src.utils.logging import init_app_logger, get_logger

logger = get_logger(__name__)

SCRIPTS_DIR = Path(__file__).resolve().parent.parent / "scripts"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="erm-asymptotics",
        description="High-dimensional ERM classification: experiments, figures and theory checks"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run a TOML experiment configuration")
    run.add_argument("config", type=Path)
    run.add_argument("--workers", type=int, default=None, help="Process count (default ERM_WORKERS)")
    run.add_argument("--serial", action="store_true", help="Run trials in this process")
    run.add_argument("--csv", type=Path, default=None, help="Override the configured CSV path")

    figure = sub.add_parser("figure", help="Reproduce one figure")
    figure.add_argument("fig_id")
    figure.add_argument("--out", type=Path, default=None)
    figure.add_argument("--reps", type=int, default=None)
    figure.add_argument("--seed", type=int, default=0)
    figure.add_argument("--workers", type=int, default=None)

    selftest = sub.add_parser("selftest", help="Run the fast property suites")
    selftest.add_argument("pytest_args", nargs="*")

    sub.add_parser("serve", help="Start the MCP server")
    return parser


def _run(args) -> int:
    from src.experiments.config import load_config
    from src.experiments.runner import run_experiment, summarize
    from src.experiments.plotting import plot_summary

    experiment = load_config(args.config)
    workers = 1 if args.serial else args.workers
    records = run_experiment(experiment, workers=workers, csv_path=args.csv)

    if experiment.outputs.plot:
        plot_summary(experiment.outputs.plot, summarize(records),
                     by_lambda=len(experiment.lambdas) > 1, title=experiment.name)

    failed = [r for r in records if r.status != "ok"]
    print(f"{len(records)} records, {len(failed)} not ok")
    if failed:
        return ErmError.EXIT_NUMERICAL
    return 0


def _figure(args) -> int:
    from src.experiments.figures import reproduce_figure

    paths = reproduce_figure(args.fig_id, out_dir=args.out, reps=args.reps, seed=args.seed,
                             workers=args.workers)
    for path in paths:
        print(path)
    return 0


def _selftest(args) -> int:
    import pytest

    return int(pytest.main([str(SCRIPTS_DIR), "-q", "-m", "not slow", *args.pytest_args]))


def _serve(args) -> int:
    from src.server import serve

    serve()
    return 0


COMMANDS = {
    "run": _run,
    "figure": _figure,
    "selftest": _selftest,
    "serve": _serve,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    init_app_logger(
        config.LOG_LEVEL if config else "INFO",
        config.LOG_STRUCTURED if config else False
    )
    try:
        return COMMANDS[args.command](args)
    except ErmError as e:
        logger.error(f"{type(e).__name__}: {e.message}", extra={'code': e.code})
        print(f"error: {e.message}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
