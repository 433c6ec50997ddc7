"""Reader/writer for the IDX binary container used by MNIST-style datasets.

Two shapes are supported: image files (magic ``00 00 08 03``, header of four
big-endian u32 words, then ``count*rows*cols`` pixel bytes) and label files
(magic ``00 00 08 01``, two header words, then ``count`` label bytes).
Reads transparently unwrap gzip; writes are always uncompressed and always
use MNIST orientation.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .errors import FormatError

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

_GZIP_SIGNATURE = b"\x1f\x8b"


def _open_source(src) -> BinaryIO:
    """Accept a path, bytes, or binary file object; sniff and unwrap gzip."""
    if isinstance(src, (str, Path)):
        fh = open(src, "rb")
    elif isinstance(src, (bytes, bytearray)):
        import io

        fh = io.BytesIO(bytes(src))
    else:
        fh = src
    head = fh.read(2)
    fh.seek(-len(head), 1)
    if head == _GZIP_SIGNATURE:
        return gzip.GzipFile(fileobj=fh)
    return fh


def _read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise FormatError(f"truncated {what}: expected {n} bytes, got {len(data)}")
    return data


def write_images(images: np.ndarray, out) -> int:
    """Write a (count, 28, 28) or (count, 784) uint8 array as an IDX image file.

    Returns the number of bytes written (16 header + 784 per image).
    """
    arr = np.ascontiguousarray(images, dtype=np.uint8)
    if arr.ndim == 2 and arr.shape[1] == 784:
        arr = arr.reshape(-1, 28, 28)
    if arr.ndim != 3 or arr.shape[1:] != (28, 28):
        raise FormatError(f"images must be (count, 28, 28), got {arr.shape}")
    count = arr.shape[0]
    header = struct.pack(">IIII", IMAGE_MAGIC, count, 28, 28)
    payload = arr.tobytes()
    if isinstance(out, (str, Path)):
        with open(out, "wb") as fh:
            fh.write(header)
            fh.write(payload)
    else:
        out.write(header)
        out.write(payload)
    return len(header) + len(payload)


def read_images(src, transpose: bool = False) -> np.ndarray:
    """Read an IDX image file into a (count, rows, cols) uint8 array.

    ``transpose`` swaps row/column axes of every image on load; the widely
    circulated EMNIST files store images transposed relative to MNIST
    orientation, so set it when reading those.
    """
    fh = _open_source(src)
    magic, count, rows, cols = struct.unpack(">IIII", _read_exact(fh, 16, "IDX image header"))
    if magic != IMAGE_MAGIC:
        raise FormatError(f"bad IDX image magic 0x{magic:08x}, expected 0x{IMAGE_MAGIC:08x}")
    payload = _read_exact(fh, count * rows * cols, "IDX image payload")
    extra = fh.read(1)
    if extra:
        raise FormatError(f"trailing bytes after {count * rows * cols}-byte IDX image payload")
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(count, rows, cols)
    if transpose:
        arr = arr.transpose(0, 2, 1).copy()
    return arr


def write_labels(labels, out) -> int:
    """Write a 1-D label sequence as an IDX label file; returns bytes written."""
    arr = np.ascontiguousarray(labels, dtype=np.uint8)
    if arr.ndim != 1:
        raise FormatError(f"labels must be 1-D, got shape {arr.shape}")
    header = struct.pack(">II", LABEL_MAGIC, arr.shape[0])
    payload = arr.tobytes()
    if isinstance(out, (str, Path)):
        with open(out, "wb") as fh:
            fh.write(header)
            fh.write(payload)
    else:
        out.write(header)
        out.write(payload)
    return len(header) + len(payload)


def read_labels(src) -> np.ndarray:
    """Read an IDX label file into a (count,) uint8 array."""
    fh = _open_source(src)
    magic, count = struct.unpack(">II", _read_exact(fh, 8, "IDX label header"))
    if magic != LABEL_MAGIC:
        raise FormatError(f"bad IDX label magic 0x{magic:08x}, expected 0x{LABEL_MAGIC:08x}")
    payload = _read_exact(fh, count, "IDX label payload")
    extra = fh.read(1)
    if extra:
        raise FormatError(f"trailing bytes after {count}-byte IDX label payload")
    return np.frombuffer(payload, dtype=np.uint8).copy()
