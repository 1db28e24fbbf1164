"""Command-line entry point.

One subcommand per pipeline stage plus ``run`` for the whole chain. Exit
codes: 0 on success, 1 for input problems (bad arguments, unreadable config
or image, infeasible geometry), 2 for unexpected internal failures.
"""

from __future__ import annotations

import argparse
import os
import sys

from .pipeline import STAGES, load_config, run_pipeline

_STAGE_HELP = {
    "run": "execute every stage in order",
    "split": "separate the input image into per-pen density fields",
    "stipple": "place density-matched stipple points per channel",
    "tour": "order each channel's points with a greedy tour",
    "optimize": "improve tours and fit bounded-curvature splines",
    "plan": "fit the canvas to the arm and solve joint trajectories",
    "render": "emit SVG, preview, plotter program, and stats",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tspdraw",
        description="Turn a raster image into multi-pen plotter toolpaths.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in _STAGE_HELP.items():
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="pipeline config JSON")
        cmd.add_argument("--seed", type=int, default=None, help="override the config seed")
        cmd.add_argument("--out-dir", default="out", help="artifact directory")
        cmd.add_argument(
            "--time-budget",
            type=float,
            default=None,
            help="override tour improvement seconds per channel",
        )
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help and 2 for usage errors; a usage
        # error is an input error under this tool's convention
        return 0 if exc.code == 0 else 1
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config.seed = args.seed
        if args.time_budget is not None:
            config.time_budget = args.time_budget
        os.makedirs(args.out_dir, exist_ok=True)
        if args.command == "run":
            run_pipeline(config, args.out_dir)
        else:
            STAGES[args.command](config, args.out_dir)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
