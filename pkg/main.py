#!/usr/bin/env python3
"""
Main entry point for the multi-patch deblurring toolkit.
"""

import argparse
import sys
from pathlib import Path

# Ensure we can import from src
project_root = Path(__file__).resolve().parent
if str(project_root) not in sys.path:
    sys.path.insert(0, str(project_root))

from src import run_bench, run_eval, run_gen_data, run_infer, run_inspect, run_train  # noqa: E402
from src.utils.cli import configure_logging, execute  # noqa: E402

COMMANDS = {
    "train": (run_train, "Train a deblurring model"),
    "infer": (run_infer, "Deblur images with a trained checkpoint"),
    "eval": (run_eval, "Evaluate a checkpoint on a paired dataset (CSV on stdout)"),
    "inspect": (run_inspect, "Report parameter count, size and FLOPs of a model"),
    "bench": (run_bench, "Time forward passes of a model (CSV on stdout)"),
    "gen-data": (run_gen_data, "Generate a synthetic blur dataset"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Multi-patch hierarchical networks for motion deblurring")
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    subparsers.required = True
    for name, (module, help_text) in COMMANDS.items():
        sub = subparsers.add_parser(name, help=help_text, description=help_text)
        module.add_arguments(sub)
        sub.set_defaults(handler=module.run, command_parser=sub)
    return parser


def main(argv=None) -> int:
    """Main entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)
    return execute(args.handler, args, args.command_parser)


if __name__ == "__main__":
    sys.exit(main())
