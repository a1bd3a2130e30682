"""Image files: binary PPM (P6, 8-bit) and raw float32 tensors (.f32t).

F32T layout: magic "F32T", ndim u32, ndim x u32 dims, float32 payload (LE).
Loaded images are float32 H x W x C in [0, 1].
"""

import re
import struct
from pathlib import Path

import numpy as np

from src.adapters.storage.binary import BinaryReader, f32_bytes
from src.constants import F32T_MAGIC
from src.errors import FormatError
from src.schemas.common import ImageFormat

_PPM_HEADER = re.compile(rb"P6\s+(\d+)\s+(\d+)\s+(\d+)\s")


def encode_ppm(pixels: np.ndarray) -> bytes:
    """`pixels` is uint8 H x W x 3."""
    height, width, channels = pixels.shape
    if channels != 3 or pixels.dtype != np.uint8:
        raise ValueError("PPM needs uint8 H x W x 3")
    header = f"P6\n{width} {height}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(pixels).tobytes()


def decode_ppm(buffer: bytes) -> np.ndarray:
    match = _PPM_HEADER.match(buffer)
    if not match:
        raise FormatError("bad PPM header", 0)
    width, height, maxval = (int(v) for v in match.groups())
    if maxval != 255:
        raise FormatError(f"unsupported PPM maxval {maxval}", match.start(3))
    start = match.end()
    size = width * height * 3
    if len(buffer) - start < size:
        raise FormatError("truncated PPM payload", len(buffer))
    pixels = np.frombuffer(buffer[start : start + size], dtype=np.uint8)
    return pixels.reshape(height, width, 3).copy()


def encode_f32t(array: np.ndarray) -> bytes:
    header = F32T_MAGIC + struct.pack("<I", array.ndim)
    header += struct.pack(f"<{array.ndim}I", *array.shape)
    return header + f32_bytes(array)


def decode_f32t(buffer: bytes) -> np.ndarray:
    reader = BinaryReader(buffer)
    reader.magic(F32T_MAGIC)
    ndim = reader.u32("ndim")
    dims = [reader.u32("dim") for _ in range(ndim)]
    array = reader.f32_array(int(np.prod(dims)), "payload").reshape(dims)
    reader.expect_end()
    return array


def save_image(path: str | Path, pixels: np.ndarray, fmt: ImageFormat) -> None:
    """Write uint8 pixels as PPM, or their [0, 1] floats as F32T."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == ImageFormat.PPM:
        path.write_bytes(encode_ppm(pixels))
    else:
        path.write_bytes(encode_f32t(pixels.astype(np.float32) / 255.0))


def load_image(path: str | Path, fmt: ImageFormat) -> np.ndarray:
    buffer = Path(path).read_bytes()
    if fmt == ImageFormat.PPM:
        return decode_ppm(buffer).astype(np.float32) / 255.0
    return decode_f32t(buffer)

