#!/usr/bin/env python3
"""
Synthetic dataset generator.

Writes procedural sharp images and their frame-averaged blurry versions in
the root/{train,test}/{blur,sharp} layout with a manifest.
"""

import argparse
import sys
from pathlib import Path

# Add project root to Python path
project_root = Path(__file__).resolve().parent.parent
if str(project_root) not in sys.path:
    sys.path.insert(0, str(project_root))

from src import config  # noqa: E402
from src.data.dataset import gen_dataset  # noqa: E402
from src.exceptions import ConfigError, UsageError  # noqa: E402
from src.utils.cli import (  # noqa: E402
    EXIT_OK,
    add_common_arguments,
    configure_logging,
    execute,
    load_file_config,
    option,
    parse_size_option,
)


def add_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", required=True, help="Output dataset directory")
    parser.add_argument("--count", type=int, help="Number of pairs (default: 128)")
    parser.add_argument("--size", type=str, help="Image size HxW (default: 64x64)")
    parser.add_argument("--seed", type=int, help=f"Dataset seed (default: {config.DEFAULT_SEED})")
    parser.add_argument("--frames-min", type=int, help=f"Fewest averaged sub-frames (default: {config.FRAMES_MIN})")
    parser.add_argument("--frames-max", type=int, help=f"Most averaged sub-frames (default: {config.FRAMES_MAX})")
    parser.add_argument("--max-shift", type=float,
                        help=f"Max camera motion per sub-frame in pixels (default: {config.MAX_SHIFT_PER_FRAME})")
    parser.add_argument("--test-ratio", type=float,
                        help=f"Fraction of pairs in the test split (default: {config.DEFAULT_TEST_RATIO})")
    parser.add_argument("--jobs", type=int, help="Parallel workers (default: 1)")
    add_common_arguments(parser)


def run(args: argparse.Namespace) -> int:
    file_config = load_file_config(args)
    size_text = option(args, "size", file_config, None, "x".join(str(v) for v in config.DEFAULT_IMAGE_SIZE))
    size = parse_size_option(size_text) if isinstance(size_text, str) else tuple(size_text)
    count = int(option(args, "count", file_config, None, 128))
    frames_min = int(option(args, "frames_min", file_config, None, config.FRAMES_MIN))
    frames_max = int(option(args, "frames_max", file_config, None, config.FRAMES_MAX))
    print(f"Generating {count} blur pairs in {args.out}...")
    print("=" * 50)
    try:
        manifest = gen_dataset(
            args.out,
            count,
            size=size,
            seed=int(option(args, "seed", file_config, None, config.DEFAULT_SEED)),
            frames_min=frames_min,
            frames_max=frames_max,
            test_ratio=float(option(args, "test_ratio", file_config, None, config.DEFAULT_TEST_RATIO)),
            max_shift=float(option(args, "max_shift", file_config, None, config.MAX_SHIFT_PER_FRAME)),
            n_jobs=int(option(args, "jobs", file_config, None, 1)),
        )
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    print(f"  size: {size[0]}x{size[1]}")
    print(f"  frames averaged: {frames_min}-{frames_max}")
    print(f"  train pairs: {manifest['splits']['train']}")
    print(f"  test pairs: {manifest['splits']['test']}")
    print("\n✅ Dataset written successfully!")
    return EXIT_OK


def main(argv=None) -> int:
    """Main entry point."""
    parser = argparse.ArgumentParser(description="Generate a synthetic blur dataset")
    add_arguments(parser)
    args = parser.parse_args(argv)
    configure_logging(args.verbose)
    return execute(run, args, parser)


if __name__ == "__main__":
    sys.exit(main())
