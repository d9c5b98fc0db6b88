"""PFE1 checkpoint container.

Binary layout: magic "PFE1", u32 tensor count; per tensor a u16 name
length, UTF-8 name, u8 rank, u32 dims (little-endian), u8 dtype tag
(0 = float32), then the raw little-endian payload. The remainder of the
file is a UTF-8 JSON metadata object {stage, config, seed, iter}.
Round-trips are bit-exact for float32 tensors.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"PFE1"
DTYPE_F32 = 0


def write_pfe1(path, tensors: dict[str, np.ndarray], meta: dict) -> None:
    parts = [MAGIC, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f4", order="C")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(struct.pack("<B", DTYPE_F32))
        parts.append(arr.tobytes())
    parts.append(json.dumps(meta, sort_keys=True).encode("utf-8"))
    Path(path).write_bytes(b"".join(parts))


def read_pfe1(path) -> tuple[dict[str, np.ndarray], dict]:
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic, not a PFE1 checkpoint")

    def take(fmt: str, offset: int):
        size = struct.calcsize(fmt)
        if offset + size > len(blob):
            raise FormatError(f"{path}: truncated checkpoint")
        return struct.unpack_from(fmt, blob, offset), offset + size

    (count,), off = take("<I", 4)
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,), off = take("<H", off)
        if off + name_len > len(blob):
            raise FormatError(f"{path}: truncated checkpoint")
        name = blob[off : off + name_len].decode("utf-8")
        off += name_len
        (rank,), off = take("<B", off)
        dims, off = take(f"<{rank}I", off)
        (tag,), off = take("<B", off)
        if tag != DTYPE_F32:
            raise FormatError(f"{path}: unsupported dtype tag {tag} for tensor {name!r}")
        n_elem = int(np.prod(dims, dtype=np.int64)) if rank else 1
        nbytes = 4 * n_elem
        if off + nbytes > len(blob):
            raise FormatError(f"{path}: truncated checkpoint")
        arr = np.frombuffer(blob, dtype="<f4", count=n_elem, offset=off).reshape(dims)
        tensors[name] = arr.copy()
        off += nbytes
    try:
        meta = json.loads(blob[off:].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: bad metadata trailer: {exc}") from exc
    return tensors, meta


def require_stage(meta: dict, stage: int, path) -> None:
    found = meta.get("stage")
    if found != stage:
        raise FormatError(f"{path}: checkpoint metadata says stage={found!r}, expected stage={stage}")
