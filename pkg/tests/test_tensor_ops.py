"""
Forward behaviour of the tensor ops against nested-loop references.
"""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from src.exceptions import ShapeError
from src.tensor import Tensor, add, concat_grid, conv2d, conv_transpose2d, mse_half, relu, resize_bilinear, split_grid

GEOMETRIES = list(itertools.product((1, 3, 4), (1, 2), (0, 1)))


def conv_reference(x, w, b, stride, pad):
    n, c, h, wd = x.shape
    cout, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((n, cout, ho, wo))
    for bi in range(n):
        for o in range(cout):
            for y in range(ho):
                for x_ in range(wo):
                    acc = b[o]
                    for ci in range(c):
                        for i in range(kh):
                            for j in range(kw):
                                acc += w[o, ci, i, j] * xp[bi, ci, y * stride + i, x_ * stride + j]
                    out[bi, o, y, x_] = acc
    return out


def conv_transpose_reference(x, w, b, stride, pad):
    n, cin, h, wd = x.shape
    _, cout, kh, kw = w.shape
    full = np.zeros((n, cout, (h - 1) * stride + kh, (wd - 1) * stride + kw))
    for bi in range(n):
        for ci in range(cin):
            for y in range(h):
                for x_ in range(wd):
                    for o in range(cout):
                        for i in range(kh):
                            for j in range(kw):
                                full[bi, o, y * stride + i, x_ * stride + j] += x[bi, ci, y, x_] * w[ci, o, i, j]
    ho, wo = full.shape[2] - 2 * pad, full.shape[3] - 2 * pad
    return full[:, :, pad:pad + ho, pad:pad + wo] + b[None, :, None, None]


@pytest.mark.parametrize("kernel,stride,pad", GEOMETRIES)
def test_conv2d_matches_loop_reference(rng, kernel, stride, pad):
    x = rng.standard_normal((2, 3, 7, 6))
    w = rng.standard_normal((4, 3, kernel, kernel))
    b = rng.standard_normal(4)
    out = conv2d(Tensor(x), Tensor(w), Tensor(b), stride=stride, pad=pad)
    assert_allclose(out.data, conv_reference(x, w, b, stride, pad), rtol=0, atol=1e-9)


@pytest.mark.parametrize("kernel,stride,pad", GEOMETRIES)
def test_conv_transpose2d_matches_loop_reference(rng, kernel, stride, pad):
    x = rng.standard_normal((2, 3, 4, 5))
    w = rng.standard_normal((3, 2, kernel, kernel))
    b = rng.standard_normal(2)
    out = conv_transpose2d(Tensor(x), Tensor(w), Tensor(b), stride=stride, pad=pad)
    assert_allclose(out.data, conv_transpose_reference(x, w, b, stride, pad), rtol=0, atol=1e-9)


@pytest.mark.parametrize("kernel,stride,pad", GEOMETRIES)
def test_conv_transpose_is_adjoint_of_conv(rng, kernel, stride, pad):
    size = 8 if kernel == 4 else 7
    x = rng.standard_normal((2, 3, size, size))
    w = rng.standard_normal((4, 3, kernel, kernel))
    y_shape = conv2d(Tensor(x), Tensor(w), stride=stride, pad=pad).shape
    y = rng.standard_normal(y_shape)
    lhs = np.sum(conv2d(Tensor(x), Tensor(w), stride=stride, pad=pad).data * y)
    back = conv_transpose2d(Tensor(y), Tensor(w), stride=stride, pad=pad)
    assert back.shape == x.shape
    rhs = np.sum(x * back.data)
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


def test_codec_geometry_shapes(rng):
    x = Tensor(rng.standard_normal((1, 8, 16, 16)))
    down = conv2d(x, Tensor(rng.standard_normal((8, 8, 3, 3))), stride=2, pad=1)
    assert down.shape == (1, 8, 8, 8)
    up = conv_transpose2d(down, Tensor(rng.standard_normal((8, 4, 4, 4))), stride=2, pad=1)
    assert up.shape == (1, 4, 16, 16)


def test_conv2d_rejects_channel_mismatch(rng):
    with pytest.raises(ShapeError, match="channel mismatch"):
        conv2d(Tensor(rng.standard_normal((1, 3, 8, 8))), Tensor(rng.standard_normal((4, 2, 3, 3))))


def test_conv2d_rejects_bad_bias(rng):
    with pytest.raises(ShapeError):
        conv2d(Tensor(rng.standard_normal((1, 3, 8, 8))), Tensor(rng.standard_normal((4, 3, 3, 3))),
               Tensor(np.zeros(3)))


def test_conv_transpose2d_rejects_stride_3(rng):
    with pytest.raises(ShapeError):
        conv_transpose2d(Tensor(rng.standard_normal((1, 2, 4, 4))), Tensor(rng.standard_normal((2, 2, 3, 3))),
                         stride=3)


def test_ops_reject_non_4d():
    with pytest.raises(ShapeError):
        split_grid(Tensor(np.zeros((3, 8, 8))), 2, 1)


def test_relu_zeroes_negatives_and_keeps_dtype():
    x = Tensor(np.array([[[[-1.0, 0.0, 2.5]]]]), dtype="f32")
    out = relu(x)
    assert out.dtype == np.float32
    assert_array_equal(out.data, [[[[0.0, 0.0, 2.5]]]])


def test_add_requires_identical_dims():
    with pytest.raises(ShapeError, match="dims mismatch"):
        add(Tensor(np.zeros((1, 3, 4, 4))), Tensor(np.zeros((1, 3, 4, 2))))


def test_mse_half_value():
    pred = Tensor(np.full((1, 1, 2, 2), 0.3))
    target = Tensor(np.full((1, 1, 2, 2), 0.1))
    assert mse_half(pred, target).item() == pytest.approx(0.5 * 0.04)


@settings(max_examples=40, deadline=None)
@given(rows=st.sampled_from([1, 2, 4, 8]), cols=st.sampled_from([1, 2, 4, 8]),
       ph=st.integers(1, 5), pw=st.integers(1, 5), seed=st.integers(0, 2 ** 16))
def test_split_concat_round_trip(rows, cols, ph, pw, seed):
    x = Tensor(np.random.default_rng(seed).standard_normal((2, 3, rows * ph, cols * pw)))
    patches = split_grid(x, rows, cols)
    assert len(patches) == rows * cols
    assert_array_equal(concat_grid(patches, rows, cols).data, x.data)


def test_split_grid_is_row_major():
    x = Tensor(np.arange(16, dtype=np.float64).reshape(1, 1, 4, 4))
    patches = split_grid(x, 2, 2)
    assert_array_equal(patches[1].data[0, 0], [[2, 3], [6, 7]])
    assert_array_equal(patches[2].data[0, 0], [[8, 9], [12, 13]])


def test_split_grid_rejects_indivisible_dims():
    with pytest.raises(ShapeError, match="cannot cut"):
        split_grid(Tensor(np.zeros((1, 3, 6, 8))), 4, 1)


def test_concat_grid_rejects_wrong_count():
    with pytest.raises(ShapeError):
        concat_grid([Tensor(np.zeros((1, 3, 2, 2)))] * 3, 2, 2)


def test_resize_bilinear_halving_averages_blocks(rng):
    x = rng.standard_normal((1, 2, 4, 6))
    out = resize_bilinear(Tensor(x), 0.5)
    expected = x.reshape(1, 2, 2, 2, 3, 2).mean(axis=(3, 5))
    assert_allclose(out.data, expected, atol=1e-12)


def test_resize_bilinear_doubling_uses_quarter_taps():
    x = Tensor(np.array([[[[0.0, 4.0]]]]))
    out = resize_bilinear(x, 2)
    assert out.shape == (1, 1, 2, 4)
    assert_allclose(out.data[0, 0, 0], [0.0, 1.0, 3.0, 4.0])


def test_resize_bilinear_preserves_constants():
    x = Tensor(np.full((1, 3, 4, 4), 0.25))
    assert_allclose(resize_bilinear(resize_bilinear(x, 0.5), 2).data, x.data, atol=1e-15)
