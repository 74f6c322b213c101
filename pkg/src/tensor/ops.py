"""
Differentiable tensor operations.

Only the operations the deblurring networks need are provided: 2-D
convolution and its transposed form, ReLU, elementwise addition, spatial
grid split/concatenation, the halved mean-squared error and bilinear
resizing by a factor of two. Every op validates its inputs and raises
ShapeError on dimension mismatches.

Convolutions are computed tap by tap: each (i, j) kernel position
contributes one matrix product between the weight slice and a strided view
of the zero-padded input, which keeps memory at the size of the input.
"""

from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.exceptions import ShapeError
from src.tensor.core import Tensor, apply_op


def _require_4d(name: str, t: Tensor) -> None:
    if t.ndim != 4:
        raise ShapeError(f"{name} expects a 4-D NCHW tensor, got shape {t.shape}")


def _pad_hw(a: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return a
    return np.pad(a, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def _tap(a: np.ndarray, i: int, j: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """Strided view of a padded input seen by kernel tap (i, j)."""
    return a[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride]


def _correlate(xp: np.ndarray, w: np.ndarray, stride: int, ho: int, wo: int) -> np.ndarray:
    """out[n, o, y, x] = sum_{c,i,j} w[o, c, i, j] * xp[n, c, y*s + i, x*s + j]."""
    cout, _, kh, kw = w.shape
    acc = np.zeros((cout, xp.shape[0], ho, wo), dtype=np.result_type(xp, w))
    for i in range(kh):
        for j in range(kw):
            acc += np.tensordot(w[:, :, i, j], _tap(xp, i, j, stride, ho, wo), axes=([1], [1]))
    return np.ascontiguousarray(acc.transpose(1, 0, 2, 3))


def _scatter(gy: np.ndarray, w: np.ndarray, stride: int, hp: int, wp: int) -> np.ndarray:
    """Adjoint of _correlate: spreads gy back over a (hp, wp) padded canvas."""
    _, c, kh, kw = w.shape
    n, _, ho, wo = gy.shape
    out = np.zeros((n, c, hp, wp), dtype=np.result_type(gy, w))
    for i in range(kh):
        for j in range(kw):
            contrib = np.tensordot(w[:, :, i, j], gy, axes=([0], [1]))  # C, N, Ho, Wo
            _tap(out, i, j, stride, ho, wo)[...] += contrib.transpose(1, 0, 2, 3)
    return out


def _weight_grad(xp: np.ndarray, gy: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """dL/dw for _correlate(xp, w) given dL/dout = gy."""
    ho, wo = gy.shape[2], gy.shape[3]
    gw = np.empty((gy.shape[1], xp.shape[1], kh, kw), dtype=np.result_type(xp, gy))
    for i in range(kh):
        for j in range(kw):
            gw[:, :, i, j] = np.tensordot(gy, _tap(xp, i, j, stride, ho, wo), axes=([0, 2, 3], [0, 2, 3]))
    return gw


def _check_bias(b: Optional[Tensor], channels: int) -> None:
    if b is not None and b.shape != (channels,):
        raise ShapeError(f"bias must have shape ({channels},), got {b.shape}")


def conv2d(x: Tensor, w: Tensor, b: Optional[Tensor] = None, stride: int = 1, pad: int = 0) -> Tensor:
    """2-D cross-correlation with symmetric zero padding.

    Args:
        x: Input (N, Cin, H, W)
        w: Weights (Cout, Cin, kh, kw)
        b: Optional bias (Cout,)
        stride: Step >= 1 in both spatial directions
        pad: Zero padding added on every side

    Returns:
        Output (N, Cout, floor((H + 2*pad - kh)/stride) + 1, floor((W + 2*pad - kw)/stride) + 1)
    """
    _require_4d("conv2d", x)
    if w.ndim != 4:
        raise ShapeError(f"conv2d weights must be 4-D, got shape {w.shape}")
    if stride < 1 or pad < 0:
        raise ShapeError(f"conv2d needs stride >= 1 and pad >= 0, got stride={stride} pad={pad}")
    n, c, h, wd = x.shape
    cout, cin, kh, kw = w.shape
    if c != cin:
        raise ShapeError(f"conv2d channel mismatch: input has {c}, weights expect {cin}")
    _check_bias(b, cout)
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    if h + 2 * pad < kh or wd + 2 * pad < kw or ho <= 0 or wo <= 0:
        raise ShapeError(f"conv2d output would be empty for input {x.shape} and kernel {kh}x{kw}")

    xp = _pad_hw(x.data, pad)
    out = _correlate(xp, w.data, stride, ho, wo)
    if b is not None:
        out += b.data[None, :, None, None]

    def backward(gy: np.ndarray):
        gx = _scatter(gy, w.data, stride, h + 2 * pad, wd + 2 * pad)[:, :, pad:pad + h, pad:pad + wd]
        gw = _weight_grad(xp, gy, kh, kw, stride)
        gb = gy.sum(axis=(0, 2, 3)) if b is not None else None
        return gx, gw, gb

    inputs = (x, w, b) if b is not None else (x, w)
    return apply_op("conv2d", out, inputs, backward)


def conv_transpose2d(x: Tensor, w: Tensor, b: Optional[Tensor] = None, stride: int = 1, pad: int = 0) -> Tensor:
    """Transposed convolution, the exact adjoint of conv2d with the same weights.

    Args:
        x: Input (N, Cin, H, W)
        w: Weights (Cin, Cout, kh, kw) -- the layout of the conv2d it inverts
        b: Optional bias (Cout,)
        stride: 1 or 2
        pad: Rows/columns cropped from every side of the full output

    Returns:
        Output (N, Cout, (H-1)*stride - 2*pad + kh, (W-1)*stride - 2*pad + kw)
    """
    _require_4d("conv_transpose2d", x)
    if w.ndim != 4:
        raise ShapeError(f"conv_transpose2d weights must be 4-D, got shape {w.shape}")
    if stride not in (1, 2) or pad < 0:
        raise ShapeError(f"conv_transpose2d needs stride in {{1, 2}} and pad >= 0, got stride={stride} pad={pad}")
    n, c, h, wd = x.shape
    cin, cout, kh, kw = w.shape
    if c != cin:
        raise ShapeError(f"conv_transpose2d channel mismatch: input has {c}, weights expect {cin}")
    _check_bias(b, cout)
    hp = (h - 1) * stride + kh
    wp = (wd - 1) * stride + kw
    ho = hp - 2 * pad
    wo = wp - 2 * pad
    if ho <= 0 or wo <= 0:
        raise ShapeError(f"conv_transpose2d output would be empty for input {x.shape}")

    full = _scatter(x.data, w.data, stride, hp, wp)
    out = np.ascontiguousarray(full[:, :, pad:pad + ho, pad:pad + wo])
    if b is not None:
        out += b.data[None, :, None, None]

    def backward(gy: np.ndarray):
        gyp = _pad_hw(gy, pad)
        gx = _correlate(gyp, w.data, stride, h, wd)
        # rows of gw follow x's channels, matching the (Cin, Cout, kh, kw) layout
        gw = _weight_grad(gyp, x.data, kh, kw, stride)
        gb = gy.sum(axis=(0, 2, 3)) if b is not None else None
        return gx, gw, gb

    inputs = (x, w, b) if b is not None else (x, w)
    return apply_op("conv_transpose2d", out, inputs, backward)


def relu(x: Tensor) -> Tensor:
    """max(x, 0); the subgradient at exactly 0 is 0."""
    mask = x.data > 0
    out = np.where(mask, x.data, np.zeros((), dtype=x.dtype))

    def backward(gy: np.ndarray):
        return (gy * mask,)

    return apply_op("relu", out, (x,), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of two tensors with identical dims."""
    if a.shape != b.shape:
        raise ShapeError(f"add dims mismatch: {a.shape} vs {b.shape}")
    out = a.data + b.data

    def backward(gy: np.ndarray):
        return gy, gy

    return apply_op("add", out, (a, b), backward)


def concat_grid(patches: Sequence[Tensor], rows: int, cols: int) -> Tensor:
    """Tile row-major patches into one tensor of rows x cols blocks.

    Patch p = r*cols + c occupies rows [r*H, (r+1)*H) and columns [c*W, (c+1)*W).
    """
    if rows < 1 or cols < 1 or len(patches) != rows * cols:
        raise ShapeError(f"concat_grid needs {rows}x{cols} = {rows * cols} patches, got {len(patches)}")
    first = patches[0]
    _require_4d("concat_grid", first)
    for p in patches[1:]:
        if p.shape != first.shape:
            raise ShapeError(f"concat_grid patches disagree: {first.shape} vs {p.shape}")
    if len(patches) == 1:
        return first
    ph, pw = first.shape[2], first.shape[3]
    band = [np.concatenate([p.data for p in patches[r * cols:(r + 1) * cols]], axis=3) for r in range(rows)]
    out = np.concatenate(band, axis=2)

    def backward(gy: np.ndarray):
        return [np.ascontiguousarray(gy[:, :, r * ph:(r + 1) * ph, c * pw:(c + 1) * pw])
                for r in range(rows) for c in range(cols)]

    return apply_op("concat_grid", out, tuple(patches), backward)


def _block(x: Tensor, r: int, c: int, ph: int, pw: int) -> Tensor:
    out = np.ascontiguousarray(x.data[:, :, r * ph:(r + 1) * ph, c * pw:(c + 1) * pw])

    def backward(gy: np.ndarray):
        gx = np.zeros_like(x.data, dtype=gy.dtype)
        gx[:, :, r * ph:(r + 1) * ph, c * pw:(c + 1) * pw] = gy
        return (gx,)

    return apply_op("split_grid", out, (x,), backward)


def split_grid(x: Tensor, rows: int, cols: int) -> List[Tensor]:
    """Cut x into rows x cols non-overlapping patches in row-major order."""
    _require_4d("split_grid", x)
    h, w = x.shape[2], x.shape[3]
    if rows < 1 or cols < 1 or h % rows or w % cols:
        raise ShapeError(f"split_grid cannot cut {h}x{w} into a {rows}x{cols} grid")
    if rows == 1 and cols == 1:
        return [x]
    ph, pw = h // rows, w // cols
    return [_block(x, r, c, ph, pw) for r in range(rows) for c in range(cols)]


def mse_half(pred: Tensor, target: Tensor) -> Tensor:
    """0.5 * mean((pred - target)^2) as a 0-d tensor."""
    if pred.shape != target.shape:
        raise ShapeError(f"mse_half dims mismatch: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    numel = diff.size
    out = np.asarray(0.5 * np.mean(diff * diff), dtype=diff.dtype)

    def backward(gy: np.ndarray):
        g = diff * (gy / numel)
        return g, -g

    return apply_op("mse_half", out, (pred, target), backward)


def _interp_matrix(n_in: int, factor: float, dtype: np.dtype) -> np.ndarray:
    """1-D bilinear resampling matrix with half-pixel centres (corners not aligned)."""
    n_out = int(round(n_in * factor))
    m = np.zeros((n_out, n_in), dtype=np.float64)
    for o in range(n_out):
        src = (o + 0.5) / factor - 0.5
        lo = int(np.floor(src))
        frac = src - lo
        for idx, weight in ((lo, 1.0 - frac), (lo + 1, frac)):
            if weight == 0.0:
                continue
            m[o, min(max(idx, 0), n_in - 1)] += weight
    return m.astype(dtype)


def resize_bilinear(x: Tensor, factor: float) -> Tensor:
    """Bilinear resize by 0.5 or 2 with half-pixel sampling.

    Downsampling by 2 averages each 2x2 block; upsampling by 2 uses the
    0.75/0.25 taps with edge clamping. The op is linear and differentiable.
    """
    _require_4d("resize_bilinear", x)
    if factor not in (0.5, 2, 2.0):
        raise ShapeError(f"resize_bilinear supports factors 0.5 and 2, got {factor}")
    h, w = x.shape[2], x.shape[3]
    if factor == 0.5 and (h % 2 or w % 2):
        raise ShapeError(f"resize_bilinear cannot halve odd dims {h}x{w}")
    mh = _interp_matrix(h, factor, x.dtype)
    mw = _interp_matrix(w, factor, x.dtype)
    out = np.ascontiguousarray(np.matmul(np.matmul(mh, x.data), mw.T))

    def backward(gy: np.ndarray):
        return (np.matmul(np.matmul(mh.T, gy), mw),)

    return apply_op("resize_bilinear", out, (x,), backward)
