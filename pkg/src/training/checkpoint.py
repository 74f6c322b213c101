"""
Binary checkpoint format.

Layout (little-endian)::

    magic "DMPN" | u32 version | u64 meta_len | meta (UTF-8 JSON) | u32 count
    count x ( u16 name_len | name | u8 dtype (0=f32, 1=f64) | u8 ndim | ndim x u64 | payload )
    u32 CRC32 of everything after the magic

Tensor names are "param/<name>", "adam.m/<name>" and "adam.v/<name>". The
metadata holds the model spec, the training config, epoch, step, Adam
counters, the random generator state and, for a run stopped inside an
epoch, that epoch's sample order and the position reached. JSON is written
with sorted keys so save -> load -> save is byte-identical.
"""

import json
import logging
import os
import struct
import zlib
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from src import config
from src.exceptions import (
    BadMagicError,
    CheckpointError,
    ChecksumError,
    DimensionOverflowError,
    TruncatedCheckpointError,
    VersionMismatchError,
)
from src.model.factory import Model, ModelSpec, build_model
from src.training.optim import AdamState

logger = logging.getLogger(__name__)

DTYPE_CODES = {4: 0, 8: 1}          # itemsize of the float type -> code
CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
MAX_PAYLOAD_BYTES = 1 << 40

PARAM_PREFIX = "param/"
ADAM_M_PREFIX = "adam.m/"
ADAM_V_PREFIX = "adam.v/"


@dataclass
class Checkpoint:
    """Everything needed to rebuild a model and continue its training.

    Attributes:
        model_spec: Model description
        params: Parameter values by name
        adam_m / adam_v: Optimizer moments by parameter name (empty for inference-only files)
        adam_step: Number of optimizer updates
        epoch: Completed epochs
        step: Completed training steps
        rng_state: Bit-generator state of the training RNG
        epoch_order: Sample order of an epoch interrupted by max_steps (None at an epoch boundary)
        epoch_offset: Position in epoch_order where training continues
        train_config: Training options as a plain dict
        version: Format version read from or written to disk
    """

    model_spec: ModelSpec
    params: Dict[str, np.ndarray]
    adam_m: Dict[str, np.ndarray] = field(default_factory=dict)
    adam_v: Dict[str, np.ndarray] = field(default_factory=dict)
    adam_step: int = 0
    epoch: int = 0
    step: int = 0
    rng_state: Optional[Dict[str, Any]] = None
    epoch_order: Optional[List[int]] = None
    epoch_offset: int = 0
    train_config: Dict[str, Any] = field(default_factory=dict)
    version: int = config.CHECKPOINT_VERSION

    def metadata(self) -> Dict[str, Any]:
        return {
            "model": self.model_spec.to_dict(),
            "train": self.train_config,
            "epoch": self.epoch,
            "step": self.step,
            "adam_step": self.adam_step,
            "rng": self.rng_state,
            "epoch_order": self.epoch_order,
            "epoch_offset": self.epoch_offset,
        }

    def adam_state(self) -> AdamState:
        return AdamState(m=dict(self.adam_m), v=dict(self.adam_v), step=self.adam_step)


def checkpoint_from_model(model: Model, spec: ModelSpec, state: Optional[AdamState] = None, epoch: int = 0,
                          step: int = 0, rng_state: Optional[Dict[str, Any]] = None,
                          train_config: Optional[Dict[str, Any]] = None, epoch_order: Optional[List[int]] = None,
                          epoch_offset: int = 0) -> Checkpoint:
    params = {name: t.data for name, t in model.named_parameters()}
    ckpt = Checkpoint(model_spec=spec, params=params, epoch=epoch, step=step, rng_state=rng_state,
                      epoch_order=epoch_order, epoch_offset=epoch_offset, train_config=dict(train_config or {}))
    if state is not None:
        ckpt.adam_m, ckpt.adam_v, ckpt.adam_step = dict(state.m), dict(state.v), state.step
    return ckpt


def restore_model(ckpt: Checkpoint) -> Model:
    """Build the checkpoint's model and load its parameters."""
    model = build_model(ckpt.model_spec)
    model.load_parameters(ckpt.params)
    return model


def load_into(model: Model, ckpt: Checkpoint) -> None:
    """Load checkpoint parameters into an existing model (raises ParameterMismatchError)."""
    model.load_parameters(ckpt.params)


def _encode_tensor(name: str, array: np.ndarray) -> bytes:
    array = np.asarray(array)
    if array.dtype.kind != "f" or array.dtype.itemsize not in DTYPE_CODES:
        raise CheckpointError(f"tensor '{name}' has unsupported dtype {array.dtype}")
    if array.ndim > config.CHECKPOINT_MAX_NDIM:
        raise DimensionOverflowError(f"tensor '{name}' has {array.ndim} dims")
    encoded_name = name.encode("utf-8")
    header = struct.pack("<H", len(encoded_name)) + encoded_name
    header += struct.pack("<BB", DTYPE_CODES[array.dtype.itemsize], array.ndim)
    header += struct.pack(f"<{array.ndim}Q", *array.shape)
    dtype = CODE_DTYPES[DTYPE_CODES[array.dtype.itemsize]]
    return header + np.ascontiguousarray(array, dtype=dtype).tobytes()


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    """Serialize a checkpoint to bytes."""
    meta = json.dumps(ckpt.metadata(), sort_keys=True, separators=(",", ":")).encode("utf-8")
    tensors = [(PARAM_PREFIX + n, a) for n, a in ckpt.params.items()]
    tensors += [(ADAM_M_PREFIX + n, a) for n, a in ckpt.adam_m.items()]
    tensors += [(ADAM_V_PREFIX + n, a) for n, a in ckpt.adam_v.items()]
    body = bytearray()
    body += struct.pack("<I", config.CHECKPOINT_VERSION)
    body += struct.pack("<Q", len(meta)) + meta
    body += struct.pack("<I", len(tensors))
    for name, array in tensors:
        body += _encode_tensor(name, array)
    crc = zlib.crc32(bytes(body)) & 0xFFFFFFFF
    return config.CHECKPOINT_MAGIC + bytes(body) + struct.pack("<I", crc)


class _Reader:
    def __init__(self, data: bytes, offset: int):
        self.data = data
        self.offset = offset

    def take(self, size: int, what: str) -> bytes:
        end = self.offset + size
        if end > len(self.data):
            raise TruncatedCheckpointError(
                f"checkpoint truncated while reading {what} ({len(self.data) - self.offset} of {size} bytes left)")
        chunk = self.data[self.offset:end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str, what: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_checkpoint(data: bytes) -> Checkpoint:
    """Parse checkpoint bytes.

    Checks run in order: magic, version, structure (truncation and
    dimension overflow), then the CRC.

    Raises:
        BadMagicError, VersionMismatchError, TruncatedCheckpointError,
        DimensionOverflowError, ChecksumError, CheckpointError
    """
    magic = config.CHECKPOINT_MAGIC
    if data[:len(magic)] != magic:
        raise BadMagicError(f"bad magic {data[:len(magic)]!r}, expected {magic!r}")
    reader = _Reader(data, len(magic))
    (version,) = reader.unpack("<I", "version")
    if version != config.CHECKPOINT_VERSION:
        raise VersionMismatchError(f"checkpoint version {version} is not supported "
                                   f"(expected {config.CHECKPOINT_VERSION})")
    (meta_len,) = reader.unpack("<Q", "metadata length")
    if meta_len > len(data):
        raise TruncatedCheckpointError(f"metadata length {meta_len} exceeds file size {len(data)}")
    try:
        meta = json.loads(reader.take(meta_len, "metadata").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"checkpoint metadata is not valid JSON: {exc}") from None
    if not isinstance(meta, dict) or "model" not in meta:
        raise CheckpointError("checkpoint metadata has no model description")
    (count,) = reader.unpack("<I", "tensor count")

    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H", "tensor name length")
        name = reader.take(name_len, "tensor name").decode("utf-8", errors="replace")
        code, ndim = reader.unpack("<BB", f"header of '{name}'")
        if code not in CODE_DTYPES:
            raise CheckpointError(f"tensor '{name}' has unknown dtype code {code}")
        if ndim > config.CHECKPOINT_MAX_NDIM:
            raise DimensionOverflowError(f"tensor '{name}' declares {ndim} dims "
                                         f"(max {config.CHECKPOINT_MAX_NDIM})")
        dims = reader.unpack(f"<{ndim}Q", f"dims of '{name}'")
        dtype = CODE_DTYPES[code]
        nbytes = int(np.prod(dims, dtype=object)) * dtype.itemsize if dims else dtype.itemsize
        if nbytes > MAX_PAYLOAD_BYTES:
            raise DimensionOverflowError(f"tensor '{name}' declares dims {dims} ({nbytes} bytes)")
        payload = reader.take(nbytes, f"payload of '{name}'")
        tensors[name] = np.frombuffer(payload, dtype=dtype).reshape(dims).astype(dtype.newbyteorder("="))

    body_end = reader.offset
    (stored_crc,) = reader.unpack("<I", "checksum")
    if reader.offset != len(data):
        raise CheckpointError(f"{len(data) - reader.offset} unexpected bytes after the checksum")
    actual_crc = zlib.crc32(data[len(magic):body_end]) & 0xFFFFFFFF
    if actual_crc != stored_crc:
        raise ChecksumError(f"checksum mismatch: stored {stored_crc:08x}, computed {actual_crc:08x}")

    def group(prefix: str) -> Dict[str, np.ndarray]:
        return {n[len(prefix):]: a for n, a in tensors.items() if n.startswith(prefix)}

    return Checkpoint(
        model_spec=ModelSpec.from_dict(meta["model"]),
        params=group(PARAM_PREFIX),
        adam_m=group(ADAM_M_PREFIX),
        adam_v=group(ADAM_V_PREFIX),
        adam_step=int(meta.get("adam_step", 0)),
        epoch=int(meta.get("epoch", 0)),
        step=int(meta.get("step", 0)),
        rng_state=meta.get("rng"),
        epoch_order=meta.get("epoch_order"),
        epoch_offset=int(meta.get("epoch_offset", 0)),
        train_config=meta.get("train") or {},
        version=version,
    )


def save_checkpoint(path: str, ckpt: Checkpoint) -> None:
    """Write a checkpoint atomically (temporary file then rename)."""
    data = encode_checkpoint(ckpt)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tmp_path = f"{path}.tmp"
    with open(tmp_path, "wb") as fh:
        fh.write(data)
    os.replace(tmp_path, path)
    logger.info("checkpoint written to %s (%d tensors, %d bytes)", path, len(ckpt.params), len(data))


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as fh:
        data = fh.read()
    return decode_checkpoint(data)
