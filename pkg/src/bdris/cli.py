"""Command-line entry point: ``run``, ``validate`` and ``list-experiments``."""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .experiments import EXPERIMENT_KINDS, WORKERS_ENV, run_experiment, validate_document
from .scenario import ConfigError, load_config_document


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bdris", description="RIS network simulation experiments")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the experiment described by a config file")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", required=True, type=_seed)
    run.add_argument("--out", required=True)
    run.add_argument("--workers", type=int, default=None, help=f"worker processes (default: ${WORKERS_ENV} or 1)")

    val = sub.add_parser("validate", help="check a config file")
    val.add_argument("--config", required=True)

    sub.add_parser("list-experiments", help="list experiment kinds")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-experiments":
        for kind, text in EXPERIMENT_KINDS.items():
            print(f"{kind}\t{text}")
        return 0
    try:
        doc = load_config_document(args.config)
        if args.command == "validate":
            for line in validate_document(doc):
                print(line)
            print("ok")
            return 0
        files = run_experiment(doc, args.seed, args.out, workers=args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps({"out": args.out, "files": files}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
