"""
Image quality metrics: PSNR and single-scale SSIM on [0, 1] images.
"""

from typing import Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src import config
from src.exceptions import ShapeError
from src.tensor import Tensor

ImageLike = Union[Tensor, np.ndarray]


def _values(image: ImageLike) -> np.ndarray:
    return np.asarray(image.data if isinstance(image, Tensor) else image, dtype=np.float64)


def _as_planes(image: np.ndarray) -> np.ndarray:
    """(..., H, W) -> (P, H, W) stack of planes."""
    if image.ndim < 2:
        raise ShapeError(f"expected an image with at least 2 dims, got shape {image.shape}")
    return image.reshape((-1,) + image.shape[-2:])


def psnr(a: ImageLike, b: ImageLike, cap: float = config.PSNR_CAP_DB) -> float:
    """10 * log10(1 / mse) over all values, capped at `cap` dB (identical images give the cap)."""
    x, y = _values(a), _values(b)
    if x.shape != y.shape:
        raise ShapeError(f"psnr dims mismatch: {x.shape} vs {y.shape}")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return cap
    return min(10.0 * np.log10(1.0 / mse), cap)


def gaussian_window(size: int = config.SSIM_WINDOW, sigma: float = config.SSIM_SIGMA) -> np.ndarray:
    """Normalized 1-D Gaussian taps."""
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(planes: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable 'valid' filtering of (P, H, W) planes with the taps g along both axes."""
    rows = sliding_window_view(planes, g.size, axis=2) @ g
    return sliding_window_view(rows, g.size, axis=1) @ g


def ssim_map(x: np.ndarray, y: np.ndarray, size: int = config.SSIM_WINDOW,
             sigma: float = config.SSIM_SIGMA) -> np.ndarray:
    """Per-window SSIM of (P, H, W) planes, shape (P, H - size + 1, W - size + 1)."""
    c1 = (config.SSIM_K1 * config.SSIM_RANGE) ** 2
    c2 = (config.SSIM_K2 * config.SSIM_RANGE) ** 2
    g = gaussian_window(size, sigma)
    mu_x = _filter_valid(x, g)
    mu_y = _filter_valid(y, g)
    var_x = _filter_valid(x * x, g) - mu_x * mu_x
    var_y = _filter_valid(y * y, g) - mu_y * mu_y
    cov = _filter_valid(x * y, g) - mu_x * mu_y
    numerator = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    denominator = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return numerator / denominator


def ssim(a: ImageLike, b: ImageLike) -> float:
    """Mean SSIM (11x11 Gaussian window, sigma 1.5, K1 0.01, K2 0.03, L 1), per channel then averaged.

    Raises:
        ShapeError: On mismatched dims or images smaller than the window
    """
    x, y = _values(a), _values(b)
    if x.shape != y.shape:
        raise ShapeError(f"ssim dims mismatch: {x.shape} vs {y.shape}")
    px, py = _as_planes(x), _as_planes(y)
    h, w = px.shape[1:]
    if h < config.SSIM_WINDOW or w < config.SSIM_WINDOW:
        raise ShapeError(f"ssim needs images of at least {config.SSIM_WINDOW}x{config.SSIM_WINDOW}, got {h}x{w}")
    per_plane = ssim_map(px, py).reshape(px.shape[0], -1).mean(axis=1)
    return float(per_plane.mean())


def denormalize(image: ImageLike) -> np.ndarray:
    """Network-range [-0.5, 0.5] values back to [0, 1]."""
    return _values(image) + 0.5
