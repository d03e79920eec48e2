"""Binary checkpoint format.

Layout (all little-endian):
  magic "TLLMCKPT" | u32 version | u64 tensor count
  per tensor: u16 name length | utf-8 name | u8 dtype code | u8 ndim
              | u32 dims... | raw data

dtype codes: 0 = float32, 1 = float64. A plain-text manifest listing
(name, shape, trainable flag) is written alongside.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataError

CKPT_MAGIC = b"TLLMCKPT"
CKPT_VERSION = 1

_DTYPE_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def manifest_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".manifest.txt")


def save_checkpoint(path, tensors: dict[str, np.ndarray],
                    trainable: dict[str, bool] | None = None) -> None:
    """Write named arrays plus the sibling manifest."""
    trainable = trainable or {}
    path = Path(path)
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<IQ", CKPT_VERSION, len(tensors)))
        for name, arr in tensors.items():
            arr = np.asarray(arr)
            if arr.dtype not in _DTYPE_CODES:
                raise DataError(f"tensor {name!r}: unsupported dtype {arr.dtype}")
            raw = name.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise DataError(f"tensor name too long: {name[:40]}...")
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
            f.write(struct.pack("<BB", _DTYPE_CODES[arr.dtype], arr.ndim))
            for dim in arr.shape:
                f.write(struct.pack("<I", dim))
            f.write(np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<")).tobytes())
    lines = [f"{name} {tuple(np.asarray(arr).shape)} "
             f"{'trainable' if trainable.get(name, False) else 'frozen'}"
             for name, arr in tensors.items()]
    manifest_path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(path) -> dict[str, np.ndarray]:
    path = Path(path)
    with open(path, "rb") as f:
        magic = f.read(len(CKPT_MAGIC))
        if magic != CKPT_MAGIC:
            raise DataError(f"{path}: not a checkpoint (bad magic {magic!r})")
        version, count = struct.unpack("<IQ", f.read(12))
        if version != CKPT_VERSION:
            raise DataError(f"{path}: unsupported checkpoint version {version}")
        out: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", f.read(2))
            name = f.read(name_len).decode("utf-8")
            code, ndim = struct.unpack("<BB", f.read(2))
            if code not in _CODE_DTYPES:
                raise DataError(f"{path}: tensor {name!r} has unknown dtype code {code}")
            dims = struct.unpack(f"<{ndim}I", f.read(4 * ndim)) if ndim else ()
            dtype = _CODE_DTYPES[code]
            n_items = int(np.prod(dims)) if dims else 1
            buf = f.read(n_items * dtype.itemsize)
            if len(buf) != n_items * dtype.itemsize:
                raise DataError(f"{path}: truncated data for tensor {name!r}")
            out[name] = np.frombuffer(buf, dtype=dtype).reshape(dims).copy()
    return out
