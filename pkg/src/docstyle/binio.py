"""Little-endian primitives shared by the binary container formats."""
from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np


class FormatError(ValueError):
    """Raised when a binary container is malformed or truncated."""


def read_exact(fh: BinaryIO, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise FormatError(f"truncated file: wanted {n} bytes, got {len(data)}")
    return data


def expect_magic(fh: BinaryIO, magic: bytes):
    got = fh.read(len(magic))
    if got != magic:
        raise FormatError(f"bad magic: expected {magic!r}, got {got!r}")


def write_u8(fh: BinaryIO, value: int):
    fh.write(struct.pack("<B", value))


def read_u8(fh: BinaryIO) -> int:
    return struct.unpack("<B", read_exact(fh, 1))[0]


def write_u32(fh: BinaryIO, value: int):
    fh.write(struct.pack("<I", value))


def read_u32(fh: BinaryIO) -> int:
    return struct.unpack("<I", read_exact(fh, 4))[0]


def write_i32(fh: BinaryIO, value: int):
    fh.write(struct.pack("<i", value))


def read_i32(fh: BinaryIO) -> int:
    return struct.unpack("<i", read_exact(fh, 4))[0]


def write_f64(fh: BinaryIO, value: float):
    fh.write(struct.pack("<d", value))


def read_f64(fh: BinaryIO) -> float:
    return struct.unpack("<d", read_exact(fh, 8))[0]


def write_str(fh: BinaryIO, text: str):
    raw = text.encode("utf-8")
    write_u32(fh, len(raw))
    fh.write(raw)


def read_str(fh: BinaryIO) -> str:
    n = read_u32(fh)
    return read_exact(fh, n).decode("utf-8")


def write_array(fh: BinaryIO, arr: np.ndarray, dtype: str):
    """Write shape header (ndim, dims as u32) then row-major payload."""
    arr = np.ascontiguousarray(arr, dtype=np.dtype(dtype))
    write_u32(fh, arr.ndim)
    for dim in arr.shape:
        write_u32(fh, dim)
    fh.write(arr.tobytes())


def read_array(fh: BinaryIO, dtype: str) -> np.ndarray:
    ndim = read_u32(fh)
    if ndim > 8:
        raise FormatError(f"implausible array rank {ndim}")
    shape = tuple(read_u32(fh) for _ in range(ndim))
    dt = np.dtype(dtype)
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    raw = read_exact(fh, count * dt.itemsize)
    return np.frombuffer(raw, dtype=dt).reshape(shape).copy()
