#!/usr/bin/env python3
"""
Model inspection runner.

Prints the exact parameter count and storage of a model, the share of every
encoder/decoder pair, and the analytic FLOPs each level spends on one image.
"""

import argparse
import sys
from pathlib import Path
from typing import List

# Add project root to Python path
project_root = Path(__file__).resolve().parent.parent
if str(project_root) not in sys.path:
    sys.path.insert(0, str(project_root))

import pandas as pd  # noqa: E402

from src import config  # noqa: E402
from src.model.blocks import (  # noqa: E402
    decoder_parameters,
    encoder_parameters,
    param_bytes,
    param_count,
)
from src.model.factory import Model, build_model  # noqa: E402
from src.model.flops import level_costs  # noqa: E402
from src.utils.cli import (  # noqa: E402
    EXIT_OK,
    add_common_arguments,
    add_model_arguments,
    configure_logging,
    execute,
    load_file_config,
    model_spec_from_args,
    option,
    parse_size_option,
)

INSPECT_PROFILE = config.FULL_PROFILE


def add_arguments(parser: argparse.ArgumentParser) -> None:
    add_model_arguments(parser)
    parser.add_argument("--size", type=str,
                        help="Image size HxW for the FLOP count (default: %dx%d)" % config.DEFAULT_BENCH_SIZE)
    add_common_arguments(parser)


def codec_table(model: Model) -> pd.DataFrame:
    """Parameter count and MB of every distinct encoder/decoder pair."""
    rows = []
    for name, pair in model.unique_codecs():
        rows.append({
            "codec": name,
            "params": param_count(pair),
            "encoder_mb": param_bytes(encoder_parameters(pair)) / config.BYTES_PER_MB,
            "decoder_mb": param_bytes(decoder_parameters(pair)) / config.BYTES_PER_MB,
            "mb": param_bytes(pair) / config.BYTES_PER_MB,
        })
    return pd.DataFrame(rows)


def flops_table(model: Model, h: int, w: int) -> pd.DataFrame:
    rows = [{
        "level": cost.name,
        "patches": cost.patches,
        "patch": f"{cost.patch_size[0]}x{cost.patch_size[1]}",
        "gflops": cost.flops / 1e9,
    } for cost in level_costs(model, h, w)]
    return pd.DataFrame(rows)


def report_lines(model: Model, label: str, h: int, w: int) -> List[str]:
    count = param_count(model)
    codecs = codec_table(model)
    flops = flops_table(model, h, w)
    lines = [
        f"Model: {label}",
        "=" * 50,
        f"  parameters: {count:,}",
        f"  size: {param_bytes(model) / config.BYTES_PER_MB:.2f} MB ({model.unique_codecs()[0][1].dtype})",
        f"  distinct encoder/decoder pairs: {len(codecs)}",
        "",
        "Per codec:",
        "-" * 30,
        codecs.to_string(index=False, float_format=lambda v: f"{v:.3f}"),
        "",
        f"FLOPs per level ({h}x{w}):",
        "-" * 30,
        flops.to_string(index=False, float_format=lambda v: f"{v:.3f}"),
        "",
        f"  total: {flops['gflops'].sum():.3f} GFLOPs",
    ]
    return lines


def run(args: argparse.Namespace) -> int:
    file_config = load_file_config(args)
    spec = model_spec_from_args(args, file_config, default_profile=INSPECT_PROFILE)
    size = option(args, "size", file_config, None, config.DEFAULT_BENCH_SIZE)
    h, w = parse_size_option(size) if isinstance(size, str) else tuple(size)
    model = build_model(spec)
    print("\n".join(report_lines(model, spec.label, h, w)))
    return EXIT_OK


def main(argv=None) -> int:
    """Main entry point."""
    parser = argparse.ArgumentParser(description="Report parameter count, size and FLOPs of a model")
    add_arguments(parser)
    args = parser.parse_args(argv)
    configure_logging(args.verbose)
    return execute(run, args, parser)


if __name__ == "__main__":
    sys.exit(main())
