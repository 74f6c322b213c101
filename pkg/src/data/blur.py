"""
Synthetic motion blur by averaging shifted copies of a sharp image.

A camera trajectory is a list of K global (dy, dx) offsets. Every sub-frame
is the sharp image translated by its offset (bilinear sampling, reflect
boundary); the blurry image is the average of the K sub-frames. The middle
sub-frame, index (K - 1) // 2, has offset (0, 0) and is the sharp target.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from src import config
from src.exceptions import ConfigError
from src.tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass
class Trajectory:
    """Per-sub-frame offsets (K, 2) in pixels, rows (dy, dx)."""

    offsets: np.ndarray
    kind: str = "random"
    seed: Optional[int] = None

    @property
    def frames(self) -> int:
        return len(self.offsets)


@dataclass
class BlurSample:
    """Blurry / sharp pair with its synthesis metadata."""

    blurry: Tensor
    sharp: Tensor
    frames: int
    trajectory: Trajectory
    meta: Dict[str, object] = field(default_factory=dict)


def middle_frame(frames: int) -> int:
    return (frames - 1) // 2


def _centered(positions: np.ndarray) -> np.ndarray:
    return positions - positions[middle_frame(len(positions))]


def static_trajectory(frames: int) -> Trajectory:
    return Trajectory(np.zeros((frames, 2)), kind="static")


def linear_trajectory(frames: int, total: Tuple[float, float]) -> Trajectory:
    """Constant-velocity motion covering `total` (dy, dx) pixels over the exposure."""
    t = np.linspace(0.0, 1.0, frames) if frames > 1 else np.zeros(1)
    positions = t[:, None] * np.asarray(total, dtype=np.float64)[None, :]
    return Trajectory(_centered(positions), kind="linear")


def random_trajectory(frames: int, rng: np.random.Generator, max_shift: float = config.MAX_SHIFT_PER_FRAME,
                      inertia: float = config.TRAJECTORY_INERTIA) -> Trajectory:
    """Smooth random walk of the camera velocity, at most `max_shift` pixels per sub-frame."""
    positions = np.zeros((frames, 2))
    angle = rng.uniform(0.0, 2.0 * np.pi)
    velocity = rng.uniform(0.0, max_shift) * np.array([np.sin(angle), np.cos(angle)])
    for k in range(1, frames):
        velocity = inertia * velocity + (1.0 - inertia) * rng.normal(0.0, max_shift, size=2)
        speed = float(np.hypot(*velocity))
        if speed > max_shift:
            velocity *= max_shift / speed
        positions[k] = positions[k - 1] + velocity
    return Trajectory(_centered(positions), kind="random")


def shift_image(image: np.ndarray, dy: float, dx: float) -> np.ndarray:
    """Translate a (C, H, W) image so that out[y, x] = image[y - dy, x - dx]."""
    if dy == 0 and dx == 0:
        return image.copy()
    _, h, w = image.shape
    pad = int(np.ceil(max(abs(dy), abs(dx)))) + 1
    padded = np.pad(image, ((0, 0), (pad, pad), (pad, pad)), mode="reflect")
    oy, ox = int(np.floor(-dy)), int(np.floor(-dx))
    fy, fx = -dy - oy, -dx - ox

    def window(y: int, x: int) -> np.ndarray:
        return padded[:, pad + y:pad + y + h, pad + x:pad + x + w]

    if fy == 0 and fx == 0:
        return window(oy, ox).copy()
    return ((1 - fy) * (1 - fx) * window(oy, ox) + (1 - fy) * fx * window(oy, ox + 1)
            + fy * (1 - fx) * window(oy + 1, ox) + fy * fx * window(oy + 1, ox + 1))


class FrameAccumulator:
    """Running weighted sum of sub-frames."""

    def __init__(self):
        self.total = None
        self.count = 0

    def add(self, frame: np.ndarray, weight: int = 1) -> None:
        if self.total is None:
            self.total = np.zeros_like(frame)
        self.total += weight * frame
        self.count += weight

    def mean(self) -> np.ndarray:
        return self.total / self.count


def average_frames(image: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Average of the shifted copies; repeated offsets are rendered once and weighted."""
    unique, counts = np.unique(np.asarray(offsets, dtype=np.float64), axis=0, return_counts=True)
    if len(unique) == 1:
        return shift_image(image, *unique[0])
    accumulator = FrameAccumulator()
    for (dy, dx), count in zip(unique, counts):
        accumulator.add(shift_image(image, dy, dx), int(count))
    return accumulator.mean()


def synth_blur(sharp: Tensor, frames: int, trajectory: Optional[Trajectory] = None,
               rng: Optional[np.random.Generator] = None,
               max_shift: float = config.MAX_SHIFT_PER_FRAME) -> BlurSample:
    """Blur a sharp (1, 3, H, W) image by averaging `frames` shifted sub-frames.

    Args:
        sharp: Image in [0, 1]
        frames: Number of sub-frames K (>= 1)
        trajectory: Offsets to use; a random trajectory drawn from rng when None
        rng: Random generator for the trajectory
        max_shift: Maximum displacement per sub-frame of a random trajectory

    Returns:
        BlurSample whose sharp target is the middle sub-frame

    Raises:
        ConfigError: If frames < 1 or the trajectory length differs from frames
    """
    if frames < 1:
        raise ConfigError(f"frames must be >= 1, got {frames}")
    if trajectory is None:
        trajectory = random_trajectory(frames, rng if rng is not None else np.random.default_rng(), max_shift)
    if trajectory.frames != frames:
        raise ConfigError(f"trajectory has {trajectory.frames} offsets, expected {frames}")
    values = sharp.data[0].astype(np.float64)
    blurry = average_frames(values, trajectory.offsets)
    meta = {"frames": frames, "trajectory": trajectory.kind, "trajectory_seed": trajectory.seed}
    return BlurSample(blurry=Tensor(blurry[None], dtype=sharp.dtype), sharp=sharp, frames=frames,
                      trajectory=trajectory, meta=meta)
