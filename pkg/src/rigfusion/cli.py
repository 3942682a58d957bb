"""Command-line front end: simulate | calibrate | fuse | evaluate | report.

Each stage consumes and produces only the documented bundle files, so the
full pipeline is a sequence of independent, rerunnable commands. Exit codes:
0 success, 2 configuration error, 3 numerical failure, 4 report thresholds
not met.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import pipeline
from .config import PipelineConfig, load_config
from .errors import NonConvergenceError, NumericalError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_THRESHOLD = 4


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="JSON config file")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rigfusion",
        description="camera-stick tracking simulation, calibration, fusion, and evaluation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate scene bundle(s)")
    _add_common(p)
    p.add_argument("--out", type=Path, required=True, help="run directory")
    p.add_argument("--seeds", type=int, default=1, help="number of datasets (seed, seed+1, ...)")

    for name, help_text in (
        ("calibrate", "hand-eye calibration per scene"),
        ("fuse", "propagate controllers and run the UKF per scene"),
        ("evaluate", "stability/accuracy reports per scene"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        p.add_argument("run_dir", type=Path, help="run directory (or one scene directory)")

    p = sub.add_parser("report", help="aggregate evaluations and check thresholds")
    _add_common(p)
    p.add_argument("run_dir", type=Path)
    return parser


def _load(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        if args.command == "simulate":
            seeds = list(range(cfg.seed, cfg.seed + args.seeds))
            dirs = pipeline.run_simulate(cfg, args.out, seeds)
            for d in dirs:
                print(f"scene written: {d}")
        elif args.command == "calibrate":
            dirs = pipeline.discover_seed_dirs(args.run_dir)
            for out in pipeline.fan_out(lambda d: pipeline.run_calibrate(d, cfg), dirs):
                print(f"calibration written: {out}")
        elif args.command == "fuse":
            dirs = pipeline.discover_seed_dirs(args.run_dir)
            for out in pipeline.fan_out(
                lambda d: pipeline.run_fuse(d, d / pipeline.CALIBRATION_FILE, cfg), dirs
            ):
                print(f"fused trajectory written: {out}")
        elif args.command == "evaluate":
            dirs = pipeline.discover_seed_dirs(args.run_dir)
            for out in pipeline.fan_out(
                lambda d: pipeline.run_evaluate(
                    d, d / pipeline.FUSED_FILE, d / pipeline.CALIBRATION_FILE, cfg
                ),
                dirs,
            ):
                print(f"evaluation written: {out}")
        elif args.command == "report":
            text, ok = pipeline.run_report(args.run_dir, cfg)
            print(text, end="")
            if not ok:
                return EXIT_THRESHOLD
    except (NumericalError, NonConvergenceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
