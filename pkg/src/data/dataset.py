"""
Paired blurry/sharp datasets: procedural generation and directory loading.

Layout::

    root/
      manifest.json
      train/blur/000000.png   train/sharp/000000.png
      test/blur/...           test/sharp/...

The loader also accepts GoPro-style trees where each split holds sequence
directories, ``root/train/<sequence>/{blur,sharp}/*.png``.
"""

import json
import logging
import os
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import cv2
import numpy as np
from joblib import Parallel, delayed
from sklearn.model_selection import train_test_split

from src import config
from src.data.blur import random_trajectory, synth_blur
from src.data.image_io import list_images, read_rgb, to_tensor, to_uint8, write_rgb
from src.exceptions import ConfigError

logger = logging.getLogger(__name__)

SPLITS = ("train", "test")
MANIFEST_NAME = "manifest.json"
_GLYPHS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
_FONTS = (cv2.FONT_HERSHEY_SIMPLEX, cv2.FONT_HERSHEY_DUPLEX, cv2.FONT_HERSHEY_COMPLEX, cv2.FONT_HERSHEY_PLAIN)


def _color(rng: np.random.Generator) -> Tuple[int, int, int]:
    return tuple(int(c) for c in rng.integers(0, 256, size=3))


def procedural_image(size: Tuple[int, int], rng: np.random.Generator) -> np.ndarray:
    """Random sharp RGB image: a linear gradient, filled and outlined shapes, and text strokes."""
    h, w = size
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    angle = rng.uniform(0.0, 2.0 * np.pi)
    t = xx * np.cos(angle) + yy * np.sin(angle)
    t = (t - t.min()) / max(t.max() - t.min(), 1e-9)
    start, end = np.array(_color(rng), dtype=np.float64), np.array(_color(rng), dtype=np.float64)
    image = np.rint(start * (1.0 - t[..., None]) + end * t[..., None]).astype(np.uint8)

    scale = min(h, w)
    for _ in range(int(rng.integers(3, 9))):
        shape = int(rng.integers(0, 3))
        thickness = -1 if rng.random() < 0.5 else int(rng.integers(1, 4))
        if shape == 0:
            center = (int(rng.integers(0, w)), int(rng.integers(0, h)))
            radius = int(rng.integers(max(2, scale // 16), max(3, scale // 4)))
            cv2.circle(image, center, radius, _color(rng), thickness, lineType=cv2.LINE_AA)
        elif shape == 1:
            p1 = (int(rng.integers(0, w)), int(rng.integers(0, h)))
            p2 = (int(rng.integers(0, w)), int(rng.integers(0, h)))
            cv2.rectangle(image, p1, p2, _color(rng), thickness)
        else:
            p1 = (int(rng.integers(0, w)), int(rng.integers(0, h)))
            p2 = (int(rng.integers(0, w)), int(rng.integers(0, h)))
            cv2.line(image, p1, p2, _color(rng), max(1, thickness), lineType=cv2.LINE_AA)

    for _ in range(int(rng.integers(1, 4))):
        text = "".join(rng.choice(list(_GLYPHS), size=int(rng.integers(2, 6))))
        font = _FONTS[int(rng.integers(0, len(_FONTS)))]
        font_scale = float(rng.uniform(0.2, 0.6)) * scale / 64.0
        origin = (int(rng.integers(0, max(1, w - 8))), int(rng.integers(8, max(9, h))))
        cv2.putText(image, text, origin, font, font_scale, _color(rng), int(rng.integers(1, 3)),
                    lineType=cv2.LINE_AA)
    return image


def _make_sample(index: int, size: Tuple[int, int], seed: int, frames_min: int, frames_max: int,
                 max_shift: float) -> Tuple[int, np.ndarray, np.ndarray, Dict[str, Any]]:
    rng = np.random.default_rng([seed, index])
    sharp = procedural_image(size, rng)
    frames = int(rng.integers(frames_min, frames_max + 1))
    trajectory_seed = int(rng.integers(0, 2 ** 63))
    trajectory = random_trajectory(frames, np.random.default_rng(trajectory_seed), max_shift)
    trajectory.seed = trajectory_seed
    sample = synth_blur(to_tensor(sharp, dtype="f64"), frames, trajectory)
    meta = dict(sample.meta)
    meta["index"] = index
    return index, to_uint8(sample.blurry), sharp, meta


def split_indices(count: int, test_ratio: float, seed: int) -> Tuple[List[int], List[int]]:
    """Train/test split of sample indices; test size is round(count * test_ratio), at most count - 1."""
    indices = list(range(count))
    test_size = min(int(round(count * test_ratio)), count - 1)
    if test_size <= 0:
        return indices, []
    train, test = train_test_split(indices, test_size=test_size, random_state=seed % (2 ** 32), shuffle=True)
    return sorted(train), sorted(test)


def gen_dataset(out_dir: str, count: int, size: Tuple[int, int] = config.DEFAULT_IMAGE_SIZE,
                seed: int = config.DEFAULT_SEED, frames_min: int = config.FRAMES_MIN,
                frames_max: int = config.FRAMES_MAX, test_ratio: float = config.DEFAULT_TEST_RATIO,
                max_shift: float = config.MAX_SHIFT_PER_FRAME, n_jobs: int = 1) -> Dict[str, Any]:
    """Generate a synthetic paired dataset.

    Every sample draws from its own generator seeded by (seed, index), so the
    output does not depend on n_jobs.

    Args:
        out_dir: Root directory (created if needed)
        count: Number of pairs (>= 1)
        size: (height, width) of every image
        seed: Dataset seed
        frames_min: Smallest number of averaged sub-frames
        frames_max: Largest number of averaged sub-frames
        test_ratio: Fraction of pairs in the test split
        max_shift: Maximum camera displacement per sub-frame, in pixels
        n_jobs: joblib workers

    Returns:
        The manifest, also written to out_dir/manifest.json
    """
    if count < 1:
        raise ConfigError(f"count must be >= 1, got {count}")
    if not 1 <= frames_min <= frames_max:
        raise ConfigError(f"invalid frame range [{frames_min}, {frames_max}]")
    if not 0.0 <= test_ratio < 1.0:
        raise ConfigError(f"test_ratio must be in [0, 1), got {test_ratio}")

    os.makedirs(out_dir, exist_ok=True)
    results = Parallel(n_jobs=n_jobs)(
        delayed(_make_sample)(i, tuple(size), seed, frames_min, frames_max, max_shift) for i in range(count))
    train, test = split_indices(count, test_ratio, seed)
    split_of = {i: "train" for i in train}
    split_of.update({i: "test" for i in test})

    pairs = []
    for index, blurry, sharp, meta in sorted(results, key=lambda r: r[0]):
        split = split_of[index]
        name = f"{index:06d}.png"
        blur_rel = os.path.join(split, "blur", name)
        sharp_rel = os.path.join(split, "sharp", name)
        write_rgb(os.path.join(out_dir, blur_rel), blurry)
        write_rgb(os.path.join(out_dir, sharp_rel), sharp)
        pairs.append({"split": split, "blur": blur_rel, "sharp": sharp_rel, **meta})

    manifest = {
        "count": count,
        "seed": seed,
        "size": list(size),
        "frames": [frames_min, frames_max],
        "max_shift": max_shift,
        "test_ratio": test_ratio,
        "splits": {"train": len(train), "test": len(test)},
        "pairs": pairs,
    }
    with open(os.path.join(out_dir, MANIFEST_NAME), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    logger.info("generated %d pairs in %s (%d train / %d test)", count, out_dir, len(train), len(test))
    return manifest


@dataclass
class ImagePair:
    """Blurry and sharp (3, H, W) float32 arrays in [0, 1]."""

    blurry: np.ndarray
    sharp: np.ndarray
    name: str


def _pairs_in(directory: str, prefix: str = "") -> List[Tuple[str, str, str]]:
    blur_dir = os.path.join(directory, "blur")
    sharp_dir = os.path.join(directory, "sharp")
    found = []
    for name in list_images(blur_dir):
        sharp_path = os.path.join(sharp_dir, name)
        if not os.path.exists(sharp_path):
            raise FileNotFoundError(f"no sharp image for {os.path.join(blur_dir, name)}")
        found.append((os.path.join(blur_dir, name), sharp_path, prefix + name))
    return found


def discover_pairs(root: str, split: Optional[str] = "train") -> List[Tuple[str, str, str]]:
    """(blur path, sharp path, name) of every pair under root/split.

    Accepts a flat split directory with blur/ and sharp/ or a directory of
    sequences each holding blur/ and sharp/. When root/split does not exist,
    root itself is searched.
    """
    base = os.path.join(root, split) if split and os.path.isdir(os.path.join(root, split)) else root
    if not os.path.isdir(base):
        raise FileNotFoundError(f"dataset directory {base} does not exist")
    if os.path.isdir(os.path.join(base, "blur")):
        return _pairs_in(base)
    found = []
    for sequence in sorted(os.listdir(base)):
        path = os.path.join(base, sequence)
        if os.path.isdir(os.path.join(path, "blur")):
            found.extend(_pairs_in(path, prefix=f"{sequence}/"))
    return found


class PairDataset(Sequence):
    """Lazily loaded, cached list of ImagePairs."""

    def __init__(self, entries: List[Tuple[str, str, str]]):
        self.entries = list(entries)
        self._cache: Dict[int, ImagePair] = {}

    @classmethod
    def from_dir(cls, root: str, split: Optional[str] = "train") -> "PairDataset":
        return cls(discover_pairs(root, split))

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, index: int) -> ImagePair:
        if index not in self._cache:
            blur_path, sharp_path, name = self.entries[index]
            blurry = to_tensor(read_rgb(blur_path)).data[0]
            sharp = to_tensor(read_rgb(sharp_path)).data[0]
            if blurry.shape != sharp.shape:
                raise ConfigError(f"pair {name}: blurry {blurry.shape} and sharp {sharp.shape} differ")
            self._cache[index] = ImagePair(blurry=blurry, sharp=sharp, name=name)
        return self._cache[index]
