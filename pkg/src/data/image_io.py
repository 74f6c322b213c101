"""
Image file I/O (8-bit RGB PNG and binary PPM) through OpenCV.

Images are exchanged as NCHW float tensors in [0, 1] with RGB channel order;
OpenCV works in BGR, so channels are flipped on the way in and out.
"""

import logging
import os
from typing import Union

import cv2
import numpy as np

from src.exceptions import ImageFormatError
from src.tensor import Tensor

logger = logging.getLogger(__name__)

SUPPORTED_EXTENSIONS = (".png", ".ppm")
PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def _extension(path: str) -> str:
    ext = os.path.splitext(path)[1].lower()
    if ext not in SUPPORTED_EXTENSIONS:
        raise ImageFormatError(f"unsupported image format '{ext or path}', expected PNG or PPM")
    return ext


def _ppm_payload_size(data: bytes, path: str) -> int:
    """Expected byte size of a binary PPM file, from its header."""
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError(f"{path}: truncated PPM header")
        tokens.append(data[start:pos])
    if tokens[0] != b"P6":
        raise ImageFormatError(f"{path}: only binary PPM (P6) is supported, got {tokens[0]!r}")
    width, height, maxval = (int(t) for t in tokens[1:])
    if maxval > 255:
        raise ImageFormatError(f"{path}: only 8-bit PPM is supported (maxval {maxval})")
    return pos + 1 + width * height * 3


def _check_complete(data: bytes, ext: str, path: str) -> None:
    if ext == ".png":
        if not data.startswith(PNG_SIGNATURE):
            raise ImageFormatError(f"{path}: not a PNG file")
        if b"IEND" not in data[-12:]:
            raise ImageFormatError(f"{path}: truncated PNG file")
    elif len(data) < _ppm_payload_size(data, path):
        raise ImageFormatError(f"{path}: truncated PPM file")


def read_rgb(path: str) -> np.ndarray:
    """Read an image file as an (H, W, 3) uint8 RGB array."""
    ext = _extension(path)
    with open(path, "rb") as fh:
        data = fh.read()
    _check_complete(data, ext, path)
    bgr = cv2.imdecode(np.frombuffer(data, dtype=np.uint8), cv2.IMREAD_COLOR)
    if bgr is None:
        raise ImageFormatError(f"{path}: cannot decode image")
    return cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB)


def write_rgb(path: str, rgb: np.ndarray) -> None:
    """Write an (H, W, 3) RGB or (H, W) gray uint8 array."""
    ext = _extension(path)
    image = cv2.cvtColor(rgb, cv2.COLOR_RGB2BGR) if rgb.ndim == 3 else rgb
    ok, encoded = cv2.imencode(ext, image)
    if not ok:
        raise ImageFormatError(f"{path}: cannot encode image")
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(encoded.tobytes())


def to_tensor(rgb: np.ndarray, dtype: str = "f32") -> Tensor:
    """(H, W, 3) uint8 -> (1, 3, H, W) tensor in [0, 1]."""
    values = rgb.astype(np.float64) / 255.0
    if values.ndim == 2:
        values = values[:, :, None]
    return Tensor(np.ascontiguousarray(values.transpose(2, 0, 1)[None]), dtype=dtype)


def to_uint8(image: Union[Tensor, np.ndarray]) -> np.ndarray:
    """Clamp to [0, 1] and round half-to-even to 8 bits; returns (H, W, C) or (H, W)."""
    values = image.data if isinstance(image, Tensor) else np.asarray(image)
    if values.ndim == 4:
        if values.shape[0] != 1:
            raise ImageFormatError(f"expected a single image, got batch of {values.shape[0]}")
        values = values[0]
    values = np.clip(values.astype(np.float64), 0.0, 1.0)
    pixels = np.rint(values * 255.0).astype(np.uint8).transpose(1, 2, 0)
    return pixels[:, :, 0] if pixels.shape[2] == 1 else np.ascontiguousarray(pixels)


def load_image(path: str, dtype: str = "f32") -> Tensor:
    """Load a PNG or PPM file as a (1, 3, H, W) tensor in [0, 1], RGB order.

    Raises:
        ImageFormatError: Unsupported format, truncated or undecodable file
    """
    return to_tensor(read_rgb(path), dtype=dtype)


def save_image(image: Union[Tensor, np.ndarray], path: str) -> None:
    """Save a (1, C, H, W) or (C, H, W) image in [0, 1] as 8-bit PNG/PPM."""
    write_rgb(path, to_uint8(image))
    logger.debug("saved %s", path)


def list_images(directory: str):
    """Sorted image file names of a directory."""
    return sorted(name for name in os.listdir(directory)
                  if os.path.splitext(name)[1].lower() in SUPPORTED_EXTENSIONS)
