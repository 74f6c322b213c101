#!/usr/bin/env python3
"""
Evaluation runner.

Deblurs every pair of a dataset split and prints a CSV on stdout with the
PSNR and SSIM of the blurry input and of the deblurred output against the
sharp image, one row per image plus a final mean row.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict

# Add project root to Python path
project_root = Path(__file__).resolve().parent.parent
if str(project_root) not in sys.path:
    sys.path.insert(0, str(project_root))

import pandas as pd  # noqa: E402

from src.data.dataset import ImagePair, PairDataset  # noqa: E402
from src.exceptions import UsageError  # noqa: E402
from src.metrics.quality import psnr, ssim  # noqa: E402
from src.model.factory import Model, deblur_image  # noqa: E402
from src.tensor import Tensor  # noqa: E402
from src.training.checkpoint import load_checkpoint, restore_model  # noqa: E402
from src.utils.cli import EXIT_OK, add_common_arguments, configure_logging, execute  # noqa: E402

logger = logging.getLogger(__name__)


def add_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--ckpt", required=True, help="Checkpoint file")
    parser.add_argument("--data", required=True, help="Dataset root")
    parser.add_argument("--split", default="test", help="Split to evaluate (default: test)")
    parser.add_argument("--per-submodel", action="store_true",
                        help="Also report the PSNR of every sub-model output of a stacked model")
    add_common_arguments(parser)


def evaluate_pair(model: Model, pair: ImagePair, dtype: str, per_submodel: bool = False) -> Dict[str, Any]:
    blurry = Tensor(pair.blurry[None], dtype=dtype)
    outputs, _ = deblur_image(model, blurry)
    row = {
        "image": pair.name,
        "psnr_blurry": psnr(pair.blurry, pair.sharp),
        "ssim_blurry": ssim(pair.blurry, pair.sharp),
        "psnr_deblurred": psnr(outputs[-1].data[0], pair.sharp),
        "ssim_deblurred": ssim(outputs[-1].data[0], pair.sharp),
    }
    if per_submodel:
        for m, output in enumerate(outputs):
            row[f"psnr_submodel{m + 1}"] = psnr(output.data[0], pair.sharp)
    return row


def evaluate(model: Model, dataset: PairDataset, dtype: str, per_submodel: bool = False) -> pd.DataFrame:
    """Per-image metrics followed by a "mean" row."""
    rows = []
    for index in range(len(dataset)):
        pair = dataset[index]
        rows.append(evaluate_pair(model, pair, dtype, per_submodel))
        logger.info("%s: %.2f dB -> %.2f dB", pair.name, rows[-1]["psnr_blurry"], rows[-1]["psnr_deblurred"])
    table = pd.DataFrame(rows)
    mean = {"image": "mean", **table.drop(columns="image").mean().to_dict()}
    return pd.concat([table, pd.DataFrame([mean])], ignore_index=True)


def run(args: argparse.Namespace) -> int:
    ckpt = load_checkpoint(args.ckpt)
    model = restore_model(ckpt)
    dataset = PairDataset.from_dir(args.data, args.split)
    if len(dataset) == 0:
        raise UsageError(f"no image pairs found under {args.data} (split {args.split})")
    table = evaluate(model, dataset, ckpt.model_spec.dtype, args.per_submodel)
    table.to_csv(sys.stdout, index=False, float_format="%.4f")
    return EXIT_OK


def main(argv=None) -> int:
    """Main entry point."""
    parser = argparse.ArgumentParser(description="Evaluate a checkpoint on a paired dataset (CSV on stdout)")
    add_arguments(parser)
    args = parser.parse_args(argv)
    configure_logging(args.verbose)
    return execute(run, args, parser)


if __name__ == "__main__":
    sys.exit(main())
