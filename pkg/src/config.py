"""
Configuration settings for the deblurring networks.

This module contains the constants and defaults shared by the tensor core,
the models, the training loop, the data generator and the command runners,
plus the small helpers that merge command-line flags with a JSON config file.
"""

import json
import os
from typing import Any, Dict, List, Optional, Tuple

# Path configuration
PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
RUNS_DIR = os.path.join(PROJECT_ROOT, 'runs')

# Tensor core
DEFAULT_DTYPE = "f32"              # training / inference dtype
DEBUG_FINITE_CHECKS = os.environ.get("DMPHN_DEBUG", "0") not in ("", "0")
FINITE_DIFF_EPS = 1e-5

# Encoder / decoder layout
STAGE_CHANNELS: Tuple[int, int, int] = (32, 64, 128)
DESK_STAGE_CHANNELS: Tuple[int, int, int] = (8, 16, 32)
RES_BLOCKS_PER_STAGE = 2
KERNEL_SIZE = 3
UPSAMPLE_KERNEL = 4                # transposed convolutions: k4, stride 2, pad 1
IMAGE_CHANNELS = 3
DOWNSAMPLING = 4                   # two stride-2 stage entries
MIN_PATCH_SIZE = 8

# Initialization: weight variance = gain / fan_in. He gain before a ReLU, unit
# gain on linear convolutions, and a small gain on the last convolution of a
# residual branch (res conv2, dec.out).
RELU_INIT_GAIN = 2.0
LINEAR_INIT_GAIN = 1.0
BRANCH_END_INIT_GAIN = 0.01

# Hierarchy
DEFAULT_PATTERN = "1-2-4"
ALLOWED_RATIOS = (1, 2, 4)
FIRST_SPLIT_AXIS = "height"        # ratio-2 splits alternate, starting here

# Model kinds accepted on the command line
MODEL_KINDS: List[str] = ["dmphn", "stack-dmphn", "vmphn", "stack-vmphn", "dmsn"]
MAX_DMSN_SCALES = 3

# Sizes are reported in MB of 10^6 bytes, the unit of the published tables
BYTES_PER_MB = 1_000_000

# Optimizer (standard Adam values)
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
LR_DECAY_MILESTONES = 3            # decay applied at 1/3 and 2/3 of the epochs

# Training profiles. "paper" is the published recipe (alias "full") and is
# not runnable on a desk CPU; "desk" is the reduced profile used for checks.
PROFILES: Dict[str, Dict[str, Any]] = {
    "paper": {
        "channels": STAGE_CHANNELS,
        "batch": 6,
        "crop": 256,
        "lr": 1e-4,
        "decay_rate": 0.1,
        "epochs": 3000,
        "max_steps": None,
    },
    "desk": {
        "channels": DESK_STAGE_CHANNELS,
        "batch": 4,
        "crop": 64,
        "lr": 5e-4,
        "decay_rate": 0.1,
        "epochs": 30,
        "max_steps": 200,
    },
}
PROFILES["full"] = PROFILES["paper"]
DEFAULT_PROFILE = "desk"
FULL_PROFILE = "paper"
DEFAULT_SEED = 0
LOSS_SMOOTHING_WINDOW = 10

# Synthetic blur (frame-averaging protocol)
FRAMES_MIN = 7
FRAMES_MAX = 13
MAX_SHIFT_PER_FRAME = 2.0          # pixels
TRAJECTORY_INERTIA = 0.7           # random-walk velocity persistence
DEFAULT_TEST_RATIO = 0.25
DEFAULT_IMAGE_SIZE = (64, 64)

# Metrics
PSNR_CAP_DB = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_RANGE = 1.0

# Checkpoint format
CHECKPOINT_MAGIC = b"DMPN"
CHECKPOINT_VERSION = 1
CHECKPOINT_MAX_NDIM = 8

# Benchmark
DEFAULT_BENCH_SIZE = (720, 1280)
DEFAULT_BENCH_ITERS = 5
DEFAULT_BENCH_WARMUP = 1


def parse_size(text: str) -> Tuple[int, int]:
    """Parse an "HxW" size string.

    Args:
        text: Size such as "720x1280"

    Returns:
        (height, width) tuple

    Raises:
        ValueError: If the text is not two positive integers separated by "x"
    """
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise ValueError(f"invalid size '{text}', expected HxW")
    try:
        h, w = int(parts[0]), int(parts[1])
    except ValueError:
        raise ValueError(f"invalid size '{text}', expected HxW") from None
    if h <= 0 or w <= 0:
        raise ValueError(f"invalid size '{text}', dimensions must be positive")
    return h, w


def parse_channels(text: str) -> Tuple[int, int, int]:
    """Parse a "C1,C2,C3" stage-channel string."""
    try:
        values = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise ValueError(f"invalid channels '{text}', expected three integers") from None
    if len(values) != 3 or min(values) <= 0:
        raise ValueError(f"invalid channels '{text}', expected three positive integers")
    return values  # type: ignore[return-value]


def load_config_file(path: Optional[str]) -> Dict[str, Any]:
    """Load a JSON configuration file.

    Keys use the long flag names with dashes replaced by underscores
    (e.g. "weight_sharing", "max_steps").

    Args:
        path: Path to the JSON file, or None

    Returns:
        Dictionary of option values (empty when path is None)
    """
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"config file {path} must contain a JSON object")
    return {str(k).replace("-", "_"): v for k, v in data.items()}


def resolve_option(name: str, flag_value: Any, file_config: Dict[str, Any],
                   profile: Optional[Dict[str, Any]], default: Any = None) -> Any:
    """Resolve one option with precedence flags > config file > profile > default."""
    if flag_value is not None:
        return flag_value
    if name in file_config:
        return file_config[name]
    if profile is not None and name in profile:
        return profile[name]
    return default
