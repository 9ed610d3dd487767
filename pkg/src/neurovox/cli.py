"""Command-line entry point.

    neurovox <subcommand> [--config FILE] [--seed N] [--out DIR]

Subcommands run one pipeline stage each (synth-data, preprocess,
features, train, predict, vocode, evaluate) or the whole chain (run).
Exit codes: 0 success, 2 configuration/argument error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .pipeline import STAGES, run_pipeline


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="neurovox",
        description="Speech reconstruction pipeline for multi-channel neural-style signals.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in list(STAGES) + ["run"]:
        sub = subparsers.add_parser(command, help=f"run the {command} stage")
        sub.add_argument("--config", type=str, default=None, help="key = value config file")
        sub.add_argument("--seed", type=int, default=None, help="override the root seed")
        sub.add_argument("--out", type=str, default=None, help="override the output directory")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed=args.seed, out_dir=args.out)
    except ConfigError as exc:
        print(f"neurovox: configuration error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"neurovox: config file not found: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "run":
            report = run_pipeline(cfg)
            print(f"report written to {report}")
        else:
            STAGES[args.command](cfg, Path(cfg.out_dir))
            print(f"{args.command} complete (out: {cfg.out_dir})")
    except FileNotFoundError as exc:
        print(f"neurovox: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        print(f"neurovox: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
