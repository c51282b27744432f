"""Command-line entry point: ``stochfreq run | plot-data | validate``."""

from __future__ import annotations

import argparse
import sys
from typing import Sequence

from .errors import StochFreqError
from .pipeline import OUTPUT_ENV, check_consistency, resolve_output_dir, run
from .plotdata import emit_plot_data
from .scenario import load_scenario

EXIT_OK = 0
EXIT_CODES = {"config": 2, "numeric": 3, "io": 4}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stochfreq",
        description="Probabilistic frequency response of a VSG-SFR model under wind uncertainty.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scenario and write its artifacts")
    p_run.add_argument("scenario", help="scenario file (YAML or JSON)")
    p_run.add_argument("--out", help=f"run directory (default: output.dir, then ${OUTPUT_ENV}/<name>, then runs/<name>)")
    p_run.add_argument("--no-mcs", action="store_true", help="skip the Monte Carlo reference and the metrics")
    p_run.add_argument("--seed", type=int, help="override the GMM and Monte Carlo seeds")
    p_run.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")

    p_plot = sub.add_parser("plot-data", help="write plot data files for a completed run")
    p_plot.add_argument("run_dir")

    p_val = sub.add_parser("validate", help="check a scenario without running it")
    p_val.add_argument("scenario")
    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    if args.threads < 1:
        print("error [config]: --threads must be >= 1", file=sys.stderr)
        return EXIT_CODES["config"]
    scenario = load_scenario(args.scenario)
    result = run(scenario, args.out, with_mcs=False if args.no_mcs else None,
                 seed=args.seed, threads=args.threads)
    print(f"run complete: {result.out_dir}")
    if result.metrics:
        print((result.out_dir / "metrics_summary.txt").read_text(), end="")
    return EXIT_OK


def _cmd_plot(args: argparse.Namespace) -> int:
    for path in emit_plot_data(args.run_dir):
        print(path)
    return EXIT_OK


def _cmd_validate(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    check_consistency(scenario, scenario.mcs_enabled)
    source = "inline gmm" if scenario.inline_gmm is not None else f"quantiles {scenario.quantiles_path}"
    print(f"{args.scenario}: ok ({source}; output {resolve_output_dir(scenario)})")
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "plot-data": _cmd_plot, "validate": _cmd_validate}[args.command]
    try:
        return handler(args)
    except StochFreqError as exc:
        print(f"error [{exc.category}]: {exc}", file=sys.stderr)
        return EXIT_CODES.get(exc.category, 1)


if __name__ == "__main__":
    sys.exit(main())
