#!/usr/bin/env python3
"""
Inference runner.

Deblurs one image or every image of a directory with a trained checkpoint.
Inputs of any size are reflect-padded to a size the model accepts and the
output is cropped back. With --dump-levels the intermediate residual images
are written as well.
"""

import argparse
import os
import sys
from pathlib import Path
from typing import List, Tuple

# Add project root to Python path
project_root = Path(__file__).resolve().parent.parent
if str(project_root) not in sys.path:
    sys.path.insert(0, str(project_root))

import matplotlib  # noqa: E402

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from src.data.image_io import SUPPORTED_EXTENSIONS, list_images, load_image, save_image, to_uint8  # noqa: E402
from src.exceptions import UsageError  # noqa: E402
from src.model.baseline import DmsnTrace  # noqa: E402
from src.model.factory import ForwardResult, deblur_image  # noqa: E402
from src.model.hierarchy import LevelTrace  # noqa: E402
from src.model.stacking import VmphnTrace  # noqa: E402
from src.training.checkpoint import load_checkpoint, restore_model  # noqa: E402
from src.utils.cli import EXIT_OK, add_common_arguments, configure_logging, execute  # noqa: E402


def add_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--ckpt", required=True, help="Checkpoint file")
    parser.add_argument("--in", dest="input", required=True, help="Input image (PNG/PPM) or directory")
    parser.add_argument("--out", required=True, help="Output directory")
    parser.add_argument("--dump-levels", action="store_true",
                        help="Also write the residual image of every level (shifted by +0.5) and a strip figure")
    add_common_arguments(parser)


def level_maps(result: ForwardResult, size: Tuple[int, int]) -> List[Tuple[str, np.ndarray]]:
    """Labelled [0, 1] images of the intermediate outputs of a forward pass, cropped to the input size."""
    padded = result.output.shape[2:]
    return [(label, _crop_map(values, size, padded)) for label, values in _raw_level_maps(result)]


def _crop_map(values: np.ndarray, size: Tuple[int, int], padded: Tuple[int, int]) -> np.ndarray:
    # coarser maps keep the same fraction of their rows and columns
    (h, w), (ph, pw) = size, padded
    mh, mw = values.shape[-2:]
    return values[..., :-(-h * mh // ph), :-(-w * mw // pw)]


def _raw_level_maps(result: ForwardResult) -> List[Tuple[str, np.ndarray]]:
    trace = result.trace
    if isinstance(trace, list):
        maps = [(f"submodel{m + 1}", s.data + 0.5) for m, s in enumerate(result.outputs)]
        last = trace[-1]
        up = last.up if isinstance(last, VmphnTrace) else last
        return maps + [(f"S{i + 1}", s.data + 0.5) for i, s in enumerate(up.residual_images())]
    if isinstance(trace, LevelTrace):
        return [(f"S{i + 1}", s.data + 0.5) for i, s in enumerate(trace.residual_images())]
    if isinstance(trace, DmsnTrace):
        return [(f"scale{k + 1}", s.data + 0.5) for k, s in enumerate(trace.residuals)]
    return []


def save_level_strip(maps: List[Tuple[str, np.ndarray]], path: str) -> None:
    fig, axes = plt.subplots(1, len(maps), figsize=(3 * len(maps), 3), squeeze=False)
    for ax, (label, values) in zip(axes[0], maps):
        pixels = to_uint8(values)
        ax.imshow(pixels, cmap="gray" if pixels.ndim == 2 else None)
        ax.set_title(label)
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def _inputs(path: str) -> List[str]:
    if os.path.isdir(path):
        return [os.path.join(path, name) for name in list_images(path)]
    if os.path.splitext(path)[1].lower() not in SUPPORTED_EXTENSIONS:
        raise UsageError(f"--in must be a PNG/PPM image or a directory, got {path}")
    return [path]


def run(args: argparse.Namespace) -> int:
    ckpt = load_checkpoint(args.ckpt)
    model = restore_model(ckpt)
    inputs = _inputs(args.input)
    os.makedirs(args.out, exist_ok=True)
    print(f"Deblurring {len(inputs)} image(s) with {ckpt.model_spec.label}...")
    print("=" * 50)
    for path in inputs:
        image = load_image(path, dtype=ckpt.model_spec.dtype)
        outputs, result = deblur_image(model, image)
        stem = os.path.splitext(os.path.basename(path))[0]
        save_image(outputs[-1], os.path.join(args.out, f"{stem}.png"))
        print(f"  {os.path.basename(path)}: {image.shape[2]}x{image.shape[3]}")
        if args.dump_levels:
            maps = level_maps(result, (image.shape[2], image.shape[3]))
            for label, values in maps:
                save_image(values, os.path.join(args.out, f"{stem}_{label}.png"))
            save_level_strip(maps, os.path.join(args.out, f"{stem}_levels.png"))
    print(f"\n✅ Results written to {args.out}")
    return EXIT_OK


def main(argv=None) -> int:
    """Main entry point."""
    parser = argparse.ArgumentParser(description="Deblur images with a trained checkpoint")
    add_arguments(parser)
    args = parser.parse_args(argv)
    configure_logging(args.verbose)
    return execute(run, args, parser)


if __name__ == "__main__":
    sys.exit(main())
