"""Binary checkpoint container with bitwise-exact tensor round trips.

Layout (all integers little-endian):
  magic ``MTMD`` | u32 format version | u32 metadata length | metadata JSON
  (config echo + metric snapshot, sorted keys) | u32 tensor count | per
  tensor: u32 name length, UTF-8 name, u32 rank, u64 dims, float64 LE
  payload in row-major order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

MAGIC = b"MTMD"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    tensors: dict[str, np.ndarray]
    config: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    version: int = FORMAT_VERSION


def save_checkpoint(ckpt: Checkpoint, path: str) -> None:
    meta = json.dumps({"config": ckpt.config, "metrics": ckpt.metrics},
                      sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", ckpt.version))
        fh.write(struct.pack("<I", len(meta)))
        fh.write(meta)
        fh.write(struct.pack("<I", len(ckpt.tensors)))
        for name in sorted(ckpt.tensors):
            arr = np.ascontiguousarray(ckpt.tensors[name], dtype=np.float64)
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.astype("<f8", copy=False).tobytes())


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise DataError(f"{path}: not a checkpoint file (bad magic)")
    offset = 4

    def take(fmt: str):
        nonlocal offset
        size = struct.calcsize(fmt)
        if offset + size > len(blob):
            raise DataError(f"{path}: truncated checkpoint")
        values = struct.unpack_from(fmt, blob, offset)
        offset += size
        return values

    (version,) = take("<I")
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    (meta_len,) = take("<I")
    meta = json.loads(blob[offset:offset + meta_len].decode("utf-8"))
    offset += meta_len
    (count,) = take("<I")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = take("<I")
        name = blob[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = take("<I")
        dims = take(f"<{rank}Q") if rank else ()
        n_elems = 1
        for d in dims:
            n_elems *= d
        n_bytes = n_elems * 8
        arr = np.frombuffer(blob[offset:offset + n_bytes], dtype="<f8").reshape(dims)
        offset += n_bytes
        tensors[name] = arr.astype(np.float64).copy()
    return Checkpoint(tensors=tensors, config=meta["config"], metrics=meta["metrics"],
                      version=version)
