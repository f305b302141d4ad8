"""Frame-matrix cache files.

Binary layout (all integers little-endian):

    magic  "UADF"  (4 bytes)
    u32    version        = 1
    u32    rows
    u32    cols
    u32    metadata_length
    bytes  metadata_length bytes of UTF-8 JSON
    f32    rows * cols little-endian floats, row-major

The JSON block carries per-row provenance (columnar lists) plus whatever
representation / hop / stack fields the producer wants echoed back.  The
float payload round-trips bit-exactly.
"""

import json
import struct
from pathlib import Path

import numpy as np

from .errors import CacheFormatError

MAGIC = b"UADF"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")


def write_cache(path: str | Path, matrix: np.ndarray, meta: dict) -> None:
    """Write ``matrix`` (2D, converted to float32) and ``meta`` (JSON-able)."""
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    if matrix.ndim != 2:
        raise ValueError(f"cache matrix must be 2D, got shape {matrix.shape}")
    blob = json.dumps(meta, sort_keys=True, ensure_ascii=False).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, matrix.shape[0], matrix.shape[1], len(blob)))
        fh.write(blob)
        fh.write(matrix.tobytes())


def read_cache(path: str | Path) -> tuple[np.ndarray, dict]:
    """Read a cache file back as (float32 matrix, metadata dict)."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise CacheFormatError(
            f"{path}: truncated header, expected {_HEADER.size} bytes, got {len(raw)}"
        )
    magic, version, rows, cols, meta_len = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise CacheFormatError(f"{path}: bad magic {magic!r} at byte 0, expected {MAGIC!r}")
    if version != VERSION:
        raise CacheFormatError(f"{path}: unsupported version {version} at byte 4")
    expected = _HEADER.size + meta_len + rows * cols * 4
    if len(raw) != expected:
        raise CacheFormatError(f"{path}: expected {expected} bytes, got {len(raw)}")
    try:
        meta = json.loads(raw[_HEADER.size : _HEADER.size + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CacheFormatError(f"{path}: bad metadata block at byte {_HEADER.size}: {exc}") from exc
    matrix = np.frombuffer(raw, dtype="<f4", count=rows * cols, offset=_HEADER.size + meta_len)
    return matrix.reshape(rows, cols).copy(), meta
