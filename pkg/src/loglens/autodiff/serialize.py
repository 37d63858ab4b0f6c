"""Flat binary container for parameter sets.

Layout, all integers little-endian unsigned 64-bit:

    magic          5 bytes, b"LLNS1"
    count          u64, number of parameters
    per parameter:
        name_len   u64
        name       name_len bytes, UTF-8
        rank       u64
        dims       rank * u64
        data       prod(dims) * f64, little-endian

Round-trips are bit-exact; parameter order is preserved.
"""

from __future__ import annotations

import struct

import numpy as np

from ..exceptions import FormatError

MAGIC = b"LLNS1"


def save_params(values: dict[str, np.ndarray], path) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(values)))
        for name, arr in values.items():
            arr = np.asarray(arr, dtype=np.float64)
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<Q", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<Q", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<Q", dim))
            fh.write(arr.astype("<f8").tobytes())


def load_params(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        (count,) = struct.unpack("<Q", fh.read(8))
        values: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<Q", fh.read(8))
            name = fh.read(name_len).decode("utf-8")
            (rank,) = struct.unpack("<Q", fh.read(8))
            dims = struct.unpack(f"<{rank}Q", fh.read(8 * rank)) if rank else ()
            n = 1
            for dim in dims:
                n *= dim
            raw = fh.read(8 * n)
            if len(raw) != 8 * n:
                raise FormatError(f"truncated data for parameter {name!r}")
            values[name] = np.frombuffer(raw, dtype="<f8").reshape(dims).copy()
    return values
