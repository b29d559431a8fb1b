"""Binary checkpoint files.

Layout::

    b"HGANCKPT" | u32 version | u64 header length | JSON header | float64 blobs

All integers are little-endian. The JSON header carries free-form metadata
plus one record per array (name, shape, offset and element count into the
blob section). Arrays are stored as little-endian IEEE-754 doubles, so a
save/load round trip is bit-exact.
"""
from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"HGANCKPT"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _encode(obj):
    if isinstance(obj, np.ndarray):
        return {"__ndarray__": obj.tolist(), "dtype": str(obj.dtype)}
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _decode(obj):
    if "__ndarray__" in obj:
        return np.array(obj["__ndarray__"], dtype=obj["dtype"])
    return obj


def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict) -> None:
    records = []
    blobs = []
    offset = 0
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        records.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        blobs.append(arr.tobytes())
        offset += arr.size
    header = json.dumps({"meta": meta, "records": records}, default=_encode, sort_keys=True).encode()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IQ", FORMAT_VERSION, len(header)))
        f.write(header)
        for b in blobs:
            f.write(b)
    os.replace(tmp, path)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file")
    version, hlen = struct.unpack("<IQ", raw[8:20])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    header = json.loads(raw[20 : 20 + hlen].decode(), object_hook=_decode)
    body = np.frombuffer(raw[20 + hlen :], dtype="<f8")
    arrays = {}
    for rec in header["records"]:
        lo, n = rec["offset"], rec["count"]
        if lo + n > body.size:
            raise CheckpointError(f"checkpoint truncated in record {rec['name']!r}")
        arrays[rec["name"]] = body[lo : lo + n].reshape(rec["shape"]).astype(np.float64)
    return arrays, header["meta"]
