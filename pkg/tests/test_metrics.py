"""
PSNR and SSIM against closed forms and a direct windowed reference.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src import config
from src.exceptions import ShapeError
from src.metrics.quality import denormalize, gaussian_window, psnr, ssim
from src.tensor import Tensor

C1 = (config.SSIM_K1 * config.SSIM_RANGE) ** 2
C2 = (config.SSIM_K2 * config.SSIM_RANGE) ** 2


def ssim_reference(x, y, size=11, sigma=1.5):
    """Mean SSIM of two 2-D images, one explicit window at a time."""
    ax = np.arange(size) - (size - 1) / 2.0
    kernel = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2 * sigma ** 2))
    kernel /= kernel.sum()
    values = []
    for i in range(x.shape[0] - size + 1):
        for j in range(x.shape[1] - size + 1):
            wx, wy = x[i:i + size, j:j + size], y[i:i + size, j:j + size]
            mx, my = np.sum(kernel * wx), np.sum(kernel * wy)
            vx = np.sum(kernel * (wx - mx) ** 2)
            vy = np.sum(kernel * (wy - my) ** 2)
            cov = np.sum(kernel * (wx - mx) * (wy - my))
            values.append(((2 * mx * my + C1) * (2 * cov + C2)) / ((mx ** 2 + my ** 2 + C1) * (vx + vy + C2)))
    return float(np.mean(values))


def test_psnr_of_a_constant_offset():
    a = np.zeros((3, 8, 8))
    assert psnr(a, a + 0.1) == pytest.approx(20.0, abs=1e-9)


def test_psnr_of_identical_images_is_capped():
    a = np.random.default_rng(0).uniform(0, 1, (1, 3, 8, 8))
    assert psnr(a, a) == config.PSNR_CAP_DB
    assert psnr(a, a + 1e-12) == config.PSNR_CAP_DB


def test_psnr_accepts_tensors():
    a = Tensor(np.zeros((1, 3, 4, 4)))
    b = Tensor(np.full((1, 3, 4, 4), 0.01))
    assert psnr(a, b) == pytest.approx(40.0)


def test_psnr_shape_mismatch():
    with pytest.raises(ShapeError):
        psnr(np.zeros((3, 4, 4)), np.zeros((3, 4, 5)))


def test_gaussian_window():
    g = gaussian_window()
    assert g.size == 11
    assert g.sum() == pytest.approx(1.0)
    assert g[5] == g.max()
    assert g[0] == pytest.approx(g[-1])


def test_ssim_matches_direct_windows(rng):
    x = rng.uniform(0, 1, (32, 32))
    y = np.clip(x + rng.normal(0, 0.1, (32, 32)), 0, 1)
    assert ssim(x, y) == pytest.approx(ssim_reference(x, y), abs=1e-6)


def test_ssim_of_constant_images():
    a, b = 0.2, 0.7
    expected = (2 * a * b + C1) / (a * a + b * b + C1)
    assert ssim(np.full((16, 16), a), np.full((16, 16), b)) == pytest.approx(expected, abs=1e-9)


def test_ssim_identical_is_one(rng):
    x = rng.uniform(0, 1, (3, 20, 24))
    assert ssim(x, x) == pytest.approx(1.0)


def test_ssim_averages_channels(rng):
    x = rng.uniform(0, 1, (3, 16, 16))
    y = rng.uniform(0, 1, (3, 16, 16))
    per_channel = [ssim(x[c], y[c]) for c in range(3)]
    assert ssim(x[None], y[None]) == pytest.approx(np.mean(per_channel))


def test_ssim_ranks_noise_levels(rng):
    x = rng.uniform(0, 1, (24, 24))
    mild = np.clip(x + rng.normal(0, 0.02, x.shape), 0, 1)
    strong = np.clip(x + rng.normal(0, 0.3, x.shape), 0, 1)
    assert ssim(x, mild) > ssim(x, strong)


def test_ssim_needs_a_full_window():
    with pytest.raises(ShapeError, match="at least"):
        ssim(np.zeros((10, 16)), np.zeros((10, 16)))
    with pytest.raises(ShapeError):
        ssim(np.zeros((16, 16)), np.zeros((16, 17)))


def test_denormalize():
    assert denormalize(Tensor(np.array([-0.5, 0.0, 0.5]))).tolist() == [0.0, 0.5, 1.0]


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 16), noise=st.floats(0.0, 0.5))
def test_metrics_are_symmetric(seed, noise):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 1, (2, 12, 12))
    y = np.clip(x + rng.normal(0, noise, x.shape), 0, 1)
    assert psnr(x, y) == pytest.approx(psnr(y, x))
    assert ssim(x, y) == pytest.approx(ssim(y, x))
    assert ssim(x, y) <= 1.0 + 1e-12


@pytest.mark.parametrize("eps", [1e-3, 1e-4])
def test_ssim_is_continuous_at_identity(rng, eps):
    x = rng.uniform(0.1, 0.9, (3, 24, 24))
    noise = rng.uniform(-1.0, 1.0, x.shape)
    near = ssim(x, x + eps * noise)
    nearer = ssim(x, x + 0.1 * eps * noise)
    assert 1.0 - 10 * eps * eps <= near <= 1.0
    assert near <= nearer <= 1.0
    assert ssim(x, x + eps) == pytest.approx(1.0, abs=10 * eps * eps)
