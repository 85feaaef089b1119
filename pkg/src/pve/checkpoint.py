"""Binary checkpoint format for network parameters and optimizer state.

Layout (all integers 64-bit little-endian unsigned, floats 32-bit LE):

    magic "PVE1"
    u64 n_params
    n_params records of:
        u64 name_len | name bytes (utf-8) | u64 rank | rank extents | data
    optional section tag "ADAM"
    u64 n_entries, then the same record format for optimizer arrays
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"PVE1"
ADAM_TAG = b"ADAM"

__all__ = ["save_checkpoint", "load_checkpoint", "MAGIC", "ADAM_TAG"]


def _write_record(f, name: str, arr: np.ndarray):
    nb = name.encode("utf-8")
    f.write(struct.pack("<Q", len(nb)))
    f.write(nb)
    f.write(struct.pack("<Q", arr.ndim))
    for ext in arr.shape:
        f.write(struct.pack("<Q", ext))
    f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_record(f) -> tuple[str, np.ndarray]:
    (name_len,) = struct.unpack("<Q", f.read(8))
    name = f.read(name_len).decode("utf-8")
    (rank,) = struct.unpack("<Q", f.read(8))
    shape = tuple(struct.unpack("<Q", f.read(8))[0] for _ in range(rank))
    count = int(np.prod(shape)) if shape else 1
    data = np.frombuffer(f.read(4 * count), dtype="<f4").reshape(shape)
    return name, np.asarray(data, dtype=np.float32)


def save_checkpoint(path, params: dict[str, np.ndarray],
                    adam_state: dict[str, np.ndarray] | None = None):
    """Write parameter arrays (and optionally optimizer arrays) to ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(params)))
        for name, arr in params.items():
            _write_record(f, name, arr)
        if adam_state is not None:
            f.write(ADAM_TAG)
            f.write(struct.pack("<Q", len(adam_state)))
            for name, arr in adam_state.items():
                _write_record(f, name, arr)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray] | None]:
    """Read back (params, adam_state-or-None) from ``path``."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        (n,) = struct.unpack("<Q", f.read(8))
        params = {}
        for _ in range(n):
            name, arr = _read_record(f)
            params[name] = arr
        tag = f.read(4)
        adam = None
        if tag == ADAM_TAG:
            (n_adam,) = struct.unpack("<Q", f.read(8))
            adam = {}
            for _ in range(n_adam):
                name, arr = _read_record(f)
                adam[name] = arr
        elif tag not in (b"", ADAM_TAG):
            raise ValueError(f"{path}: unknown section tag {tag!r}")
    return params, adam
