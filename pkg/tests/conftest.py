"""
Shared fixtures: small f64 codec layouts, seeded generators and tiny datasets.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

project_root = Path(__file__).resolve().parent.parent
if str(project_root) not in sys.path:
    sys.path.insert(0, str(project_root))

from src.data.dataset import gen_dataset  # noqa: E402
from src.model.blocks import CodecConfig  # noqa: E402
from src.tensor import Tensor  # noqa: E402

TINY_CHANNELS = (2, 3, 4)


@pytest.fixture
def tiny_codec():
    """Smallest useful layout: gradient checks stay fast in f64."""
    return CodecConfig(stage_channels=TINY_CHANNELS, res_blocks_per_stage=1)


@pytest.fixture
def small_codec():
    return CodecConfig(stage_channels=(4, 6, 8))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def image16(rng):
    """Normalized 1x3x16x16 f64 input."""
    return Tensor(rng.uniform(-0.5, 0.5, size=(1, 3, 16, 16)), dtype="f64")


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """8 pairs of 32x32 images, 2 of them in the test split."""
    root = str(tmp_path_factory.mktemp("data"))
    gen_dataset(root, 8, size=(32, 32), seed=3, frames_min=3, frames_max=5, test_ratio=0.25)
    return root

