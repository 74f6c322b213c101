"""
Checkpoint format: round trips, corruption detection and atomic writes.
"""

import os
import struct

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from src import config
from src.exceptions import (
    BadMagicError,
    CheckpointError,
    ChecksumError,
    DimensionOverflowError,
    ParameterMismatchError,
    TruncatedCheckpointError,
    VersionMismatchError,
)
from src.model.blocks import CodecConfig
from src.model.factory import ModelSpec, build_model
from src.training.checkpoint import (
    Checkpoint,
    checkpoint_from_model,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    load_into,
    restore_model,
    save_checkpoint,
)
from src.training.optim import AdamState

SPEC = ModelSpec(kind="dmphn", pattern="1-2", codec=CodecConfig(stage_channels=(4, 6, 8)), seed=3)


@pytest.fixture
def trained_checkpoint():
    model = build_model(SPEC)
    state = AdamState.create(model.named_parameters())
    rng = np.random.default_rng(11)
    for name in state.m:
        state.m[name] = rng.standard_normal(state.m[name].shape).astype(np.float32)
        state.v[name] = rng.uniform(0, 1, state.v[name].shape).astype(np.float32)
    state.step = 17
    return checkpoint_from_model(model, SPEC, state, epoch=2, step=17, rng_state=rng.bit_generator.state,
                                 train_config={"batch_size": 4, "lr0": 5e-4})


def first_tensor_offset(data: bytes) -> int:
    (meta_len,) = struct.unpack_from("<Q", data, 8)
    return 16 + meta_len + 4


def test_round_trip_is_byte_identical(tmp_path, trained_checkpoint):
    path = str(tmp_path / "model.ckpt")
    save_checkpoint(path, trained_checkpoint)
    first = open(path, "rb").read()
    loaded = load_checkpoint(path)
    assert encode_checkpoint(loaded) == first

    assert loaded.model_spec == SPEC
    assert loaded.epoch == 2
    assert loaded.step == 17
    assert loaded.adam_step == 17
    assert loaded.train_config == {"batch_size": 4, "lr0": 5e-4}
    assert loaded.rng_state == trained_checkpoint.rng_state
    for name, value in trained_checkpoint.params.items():
        assert_array_equal(loaded.params[name], value)
        assert loaded.params[name].dtype == np.float32
    assert set(loaded.adam_m) == set(trained_checkpoint.adam_m)


def test_header_layout(trained_checkpoint):
    data = encode_checkpoint(trained_checkpoint)
    assert data[:4] == b"DMPN"
    assert struct.unpack_from("<I", data, 4)[0] == config.CHECKPOINT_VERSION
    offset = first_tensor_offset(data)
    count = struct.unpack_from("<I", data, offset - 4)[0]
    assert count == 3 * len(trained_checkpoint.params)
    (name_len,) = struct.unpack_from("<H", data, offset)
    assert data[offset + 2:offset + 2 + name_len].startswith(b"param/level1.")


def test_f64_tensors_keep_their_dtype():
    spec = ModelSpec(kind="dmphn", pattern="1", codec=CodecConfig(stage_channels=(4, 6, 8)), dtype="f64")
    ckpt = checkpoint_from_model(build_model(spec), spec)
    loaded = decode_checkpoint(encode_checkpoint(ckpt))
    assert all(a.dtype == np.float64 for a in loaded.params.values())
    assert loaded.adam_m == {}


def test_restore_model(trained_checkpoint):
    model = restore_model(decode_checkpoint(encode_checkpoint(trained_checkpoint)))
    for name, tensor in model.named_parameters():
        assert_array_equal(tensor.data, trained_checkpoint.params[name])
    state = trained_checkpoint.adam_state()
    assert state.step == 17


def test_bad_magic(trained_checkpoint):
    data = encode_checkpoint(trained_checkpoint)
    with pytest.raises(BadMagicError):
        decode_checkpoint(b"PNG\x89" + data[4:])


def test_version_mismatch(trained_checkpoint):
    data = bytearray(encode_checkpoint(trained_checkpoint))
    struct.pack_into("<I", data, 4, config.CHECKPOINT_VERSION + 1)
    with pytest.raises(VersionMismatchError):
        decode_checkpoint(bytes(data))


@pytest.mark.parametrize("keep", [2, 10, 40, -10, -2])
def test_truncation(trained_checkpoint, keep):
    data = encode_checkpoint(trained_checkpoint)
    cut = data[:keep] if keep > 0 else data[:len(data) + keep]
    with pytest.raises((TruncatedCheckpointError, BadMagicError)):
        decode_checkpoint(cut)


def test_checksum_detects_flipped_payload_byte(trained_checkpoint):
    data = bytearray(encode_checkpoint(trained_checkpoint))
    data[-8] ^= 0x01
    with pytest.raises(ChecksumError):
        decode_checkpoint(bytes(data))


def test_too_many_dims(trained_checkpoint):
    data = bytearray(encode_checkpoint(trained_checkpoint))
    offset = first_tensor_offset(bytes(data))
    (name_len,) = struct.unpack_from("<H", data, offset)
    data[offset + 2 + name_len + 1] = config.CHECKPOINT_MAX_NDIM + 1
    with pytest.raises(DimensionOverflowError):
        decode_checkpoint(bytes(data))


def test_oversized_payload(trained_checkpoint):
    data = bytearray(encode_checkpoint(trained_checkpoint))
    offset = first_tensor_offset(bytes(data))
    (name_len,) = struct.unpack_from("<H", data, offset)
    struct.pack_into("<Q", data, offset + 2 + name_len + 2, 1 << 40)
    with pytest.raises(DimensionOverflowError):
        decode_checkpoint(bytes(data))


def test_encoding_rejects_too_many_dims():
    ckpt = Checkpoint(model_spec=SPEC, params={"x": np.zeros((1,) * 9, dtype=np.float32)})
    with pytest.raises(DimensionOverflowError):
        encode_checkpoint(ckpt)


def test_corrupt_errors_are_os_errors(trained_checkpoint):
    with pytest.raises(OSError):
        decode_checkpoint(b"nope")


def test_missing_model_description(trained_checkpoint):
    meta = b'{"epoch":0}'
    body = struct.pack("<I", config.CHECKPOINT_VERSION) + struct.pack("<Q", len(meta)) + meta
    with pytest.raises(CheckpointError, match="model description"):
        decode_checkpoint(b"DMPN" + body + struct.pack("<I", 0))


def test_atomic_write_replaces_the_file(tmp_path, trained_checkpoint):
    path = str(tmp_path / "nested" / "model.ckpt")
    save_checkpoint(path, trained_checkpoint)
    trained_checkpoint.step = 18
    save_checkpoint(path, trained_checkpoint)
    assert not os.path.exists(path + ".tmp")
    assert load_checkpoint(path).step == 18


def test_failed_encode_leaves_previous_file(tmp_path, trained_checkpoint):
    path = str(tmp_path / "model.ckpt")
    save_checkpoint(path, trained_checkpoint)
    before = open(path, "rb").read()
    broken = Checkpoint(model_spec=SPEC, params={"x": np.zeros(3, dtype=np.int32)})
    with pytest.raises(CheckpointError):
        save_checkpoint(path, broken)
    assert open(path, "rb").read() == before
    assert not os.path.exists(path + ".tmp")


def test_loading_into_a_different_model_fails(trained_checkpoint):
    other = build_model(ModelSpec(kind="dmphn", pattern="1-2-4", codec=CodecConfig(stage_channels=(4, 6, 8))))
    with pytest.raises(ParameterMismatchError):
        load_into(other, trained_checkpoint)
