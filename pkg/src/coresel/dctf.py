"""DCTF binary tensor files.

Layout (all integers little-endian):

    offset  size       content
    0       4          magic bytes ``DCTF``
    4       1          u8 format version, currently 1
    5       1          u8 dtype code: 1=float32, 2=int32, 3=uint8
    6       1          u8 rank
    7       5          reserved, must be zero
    12      8*rank     u64 dims
    ...     payload    row-major element bytes
    end-4   4          u32 CRC32 of the payload

The payload is written exactly as stored in memory (little-endian), so a
save/load round trip is byte-identical.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import TensorFormatError

MAGIC = b"DCTF"
VERSION = 1

_CODE_TO_DTYPE = {1: np.dtype("<f4"), 2: np.dtype("<i4"), 3: np.dtype("<u1")}
_NAME_TO_CODE = {"float32": 1, "int32": 2, "uint8": 3}
_CODE_TO_NAME = {v: k for k, v in _NAME_TO_CODE.items()}


def dtype_name(arr: np.ndarray) -> str:
    name = arr.dtype.name
    if name not in _NAME_TO_CODE:
        raise TensorFormatError(f"unsupported tensor dtype {name}")
    return name


def write_tensor(path, arr: np.ndarray) -> None:
    """Write ``arr`` to ``path`` in DCTF format."""
    code = _NAME_TO_CODE[dtype_name(arr)]
    arr = np.ascontiguousarray(arr, dtype=_CODE_TO_DTYPE[code])
    payload = arr.tobytes()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<BBB", VERSION, code, arr.ndim))
        fh.write(b"\x00" * 5)
        fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))


def read_tensor(path) -> np.ndarray:
    """Read one DCTF file, verifying structure and payload checksum."""
    name = Path(path).name
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise TensorFormatError(f"{name}: cannot read tensor file: {exc}") from exc

    if len(blob) < 16:
        raise TensorFormatError(f"{name}: truncated header ({len(blob)} bytes)")
    if blob[:4] != MAGIC:
        raise TensorFormatError(f"{name}: bad magic {blob[:4]!r}, expected {MAGIC!r}")
    version, code, rank = struct.unpack_from("<BBB", blob, 4)
    if version != VERSION:
        raise TensorFormatError(f"{name}: unsupported version {version}")
    if code not in _CODE_TO_DTYPE:
        raise TensorFormatError(f"{name}: unknown dtype code {code}")
    if blob[7:12] != b"\x00" * 5:
        raise TensorFormatError(f"{name}: reserved header bytes are not zero")

    dims_end = 12 + 8 * rank
    if len(blob) < dims_end + 4:
        raise TensorFormatError(f"{name}: truncated dims for rank {rank}")
    shape = struct.unpack_from(f"<{rank}Q", blob, 12)
    dtype = _CODE_TO_DTYPE[code]
    count = 1
    for dim in shape:
        count *= dim
    expected = dims_end + count * dtype.itemsize + 4
    if len(blob) != expected:
        raise TensorFormatError(
            f"{name}: file size {len(blob)} does not match shape {shape} "
            f"({expected} bytes expected)"
        )

    payload = blob[dims_end:-4]
    (stored_crc,) = struct.unpack_from("<I", blob, len(blob) - 4)
    actual_crc = zlib.crc32(payload) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise TensorFormatError(
            f"{name}: payload CRC mismatch (stored {stored_crc:#010x}, "
            f"computed {actual_crc:#010x})"
        )
    arr = np.frombuffer(payload, dtype=dtype).reshape(shape)
    return arr.astype(arr.dtype.newbyteorder("="), copy=True)


def declared_dtype_name(code_or_name: str) -> str:
    if code_or_name not in _NAME_TO_CODE:
        raise TensorFormatError(f"unknown declared dtype {code_or_name!r}")
    return code_or_name
