"""Writer for the DCTF artifact layout.

This is the wire format the selection engine consumes; the adapter talks to
it through files only, so the codec is implemented here from the documented
layout: magic ``DCTF``, u8 version=1, u8 dtype code (1=float32, 2=int32,
3=uint8), u8 rank, 5 reserved zero bytes, rank x u64 little-endian dims,
row-major little-endian payload, trailing u32 CRC32 of the payload.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"DCTF"
VERSION = 1
SCHEMA_VERSION = 1

_DTYPE_CODES = {"float32": 1, "int32": 2, "uint8": 3}


def write_tensor(path, arr: np.ndarray) -> dict:
    """Write one tensor; return its manifest entry."""
    name = arr.dtype.name
    if name not in _DTYPE_CODES:
        raise ValueError(f"unsupported dtype {name}")
    arr = np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<"))
    payload = arr.tobytes()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<BBB", VERSION, _DTYPE_CODES[name], arr.ndim))
        fh.write(b"\x00" * 5)
        fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))
    return {"file": Path(path).name, "dtype": name, "shape": list(arr.shape)}


def write_artifact_dir(out_dir, tensors: dict[str, np.ndarray],
                       n: int, d: int, c: int, h: int, e: int,
                       reference_epoch: int) -> Path:
    """Write tensor files plus manifest.json into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = [write_tensor(out / fname, arr) for fname, arr in sorted(tensors.items())]
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "n": n,
        "d": d,
        "C": c,
        "h": h,
        "E": e,
        "reference_epoch": reference_epoch,
        "tensors": entries,
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return out
