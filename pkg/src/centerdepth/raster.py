"""CDRAS1 raw float raster files.

Layout (little-endian): 8-byte magic ``b"CDRAS1\\0\\0"``, then u16 width,
u16 height, u16 channels, u16 reserved, then ``height*width*channels``
float32 values in row-major, channel-interleaved order.
"""
import struct
from pathlib import Path

import numpy as np

from .errors import IoFailure, MalformedRaster

MAGIC = b"CDRAS1\x00\x00"
_HEADER = struct.Struct("<8sHHHH")
HEADER_SIZE = _HEADER.size  # 16


def encode_raster(array) -> bytes:
    a = np.asarray(array)
    if a.ndim == 2:
        a = a[..., None]
    if a.ndim != 3:
        raise ValueError("raster must be (H, W) or (H, W, C)")
    h, w, c = a.shape
    if max(h, w, c) > 0xFFFF:
        raise ValueError("raster dimensions must fit in u16")
    return _HEADER.pack(MAGIC, w, h, c, 0) + np.ascontiguousarray(a, dtype="<f4").tobytes()


def decode_raster(data: bytes, path="<bytes>"):
    """Inverse of :func:`encode_raster`; single-channel rasters come back as (H, W)."""
    if len(data) < HEADER_SIZE:
        raise MalformedRaster(path, "shorter than the 16-byte header")
    magic, w, h, c, _ = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise MalformedRaster(path, f"bad magic {magic!r}")
    expected = HEADER_SIZE + 4 * w * h * c
    if len(data) != expected:
        raise MalformedRaster(path, f"expected {expected} bytes, found {len(data)}")
    a = np.frombuffer(data, dtype="<f4", offset=HEADER_SIZE).reshape(h, w, c).astype(np.float32)
    return a[..., 0] if c == 1 else a


def write_raster(path, array):
    try:
        Path(path).write_bytes(encode_raster(array))
    except OSError as e:
        raise IoFailure(path, e.strerror or str(e)) from e


def read_raster(path):
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise IoFailure(path, e.strerror or str(e)) from e
    return decode_raster(data, path)
