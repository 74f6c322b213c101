"""
Multi-scale baseline (DMSN).
"""

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from src.exceptions import ConfigError, ShapeError
from src.model.baseline import DmsnModel, dmsn_forward
from src.model.blocks import CodecConfig, codec_seed, init_params, param_count
from src.model.hierarchy import DmphnModel, forward, parse_pattern
from src.tensor import Tensor


def blurry(rng, h=32, w=32):
    return Tensor(rng.uniform(-0.5, 0.5, (1, 3, h, w)))


def test_single_scale_equals_single_level_dmphn(small_codec, rng):
    dmsn = DmsnModel.create(1, small_codec, seed=4, dtype="f64")
    dmphn = DmphnModel.create(parse_pattern("1"), small_codec, seed=4, dtype="f64")
    b1 = blurry(rng)
    assert_array_equal(dmsn_forward(dmsn, b1)[0].data, forward(dmphn, b1)[0].data)


@pytest.mark.parametrize("scales", [1, 2, 3])
def test_size_grows_with_scales(small_codec, scales):
    model = DmsnModel.create(scales, small_codec, seed=0)
    assert param_count(model) == scales * param_count(init_params(small_codec, seed=0))
    assert [name for name, _ in model.named_codecs()] == [f"scale{k + 1}" for k in range(scales)]


def test_scale_seeds(small_codec):
    model = DmsnModel.create(3, small_codec, seed=2)
    expected = init_params(small_codec, codec_seed(2, 2))
    assert_array_equal(model.codecs[2].encoder["enc.s1.entry.weight"].data,
                       expected.encoder["enc.s1.entry.weight"].data)


@pytest.mark.parametrize("scales,multiple,minimum", [(1, 4, 8), (2, 8, 16), (3, 16, 32)])
def test_size_constraints(small_codec, scales, multiple, minimum):
    model = DmsnModel.create(scales, small_codec, seed=0)
    assert model.valid_multiple() == (multiple, multiple)
    assert model.min_size() == (minimum, minimum)


@pytest.mark.parametrize("scales", [1, 2, 3])
def test_trace_shapes(small_codec, rng, scales):
    model = DmsnModel.create(scales, small_codec, seed=0, dtype="f64")
    b1 = blurry(rng)
    out, trace = dmsn_forward(model, b1)
    assert out is trace.output
    assert out.shape == b1.shape
    for k in range(scales):
        size = 32 // 2 ** k
        assert trace.inputs[k].shape == (1, 3, size, size)
        assert trace.residuals[k].shape == (1, 3, size, size)
        assert trace.features[k].shape == (1, small_codec.feature_channels, size // 4, size // 4)


@pytest.mark.parametrize("scales", [1, 2, 3])
def test_zeroed_decoders_give_identity(small_codec, rng, scales):
    model = DmsnModel.create(scales, small_codec, seed=0, dtype="f64")
    model.zero_decoders()
    b1 = blurry(rng)
    assert_array_equal(dmsn_forward(model, b1)[0].data, b1.data)


def test_rejects_invalid_dims(small_codec, rng):
    model = DmsnModel.create(3, small_codec, seed=0, dtype="f64")
    with pytest.raises(ShapeError, match="3 scales"):
        dmsn_forward(model, blurry(rng, 24, 32))
    with pytest.raises(ShapeError):
        dmsn_forward(model, blurry(rng, 16, 16))


@pytest.mark.parametrize("scales", [0, 4])
def test_scale_count_is_bounded(small_codec, scales):
    with pytest.raises(ConfigError):
        DmsnModel.create(scales, small_codec, seed=0)


def test_one_channel_output_needs_one_scale():
    codec = CodecConfig(stage_channels=(4, 6, 8), out_channels=1)
    with pytest.raises(ConfigError):
        DmsnModel.create(2, codec, seed=0, top_residual=False)
    model = DmsnModel.create(1, codec, seed=0, top_residual=False)
    out, _ = dmsn_forward(model, Tensor(np.zeros((1, 3, 16, 16), dtype=np.float32)))
    assert out.shape == (1, 1, 16, 16)
