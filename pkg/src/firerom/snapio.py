"""Binary snapshot files and the multi-array container.

Snapshot file (one matrix)::

    b"SMOR" | 0x01 | u64 rows | u64 cols | u64 reserved=0 | rows*cols f64 (column-major)

Container file (many named arrays)::

    b"SMOR" | 0x01 | u64 0 | u64 0 | u64 toc_bytes | toc (UTF-8 JSON) | payloads

A container reuses the snapshot header with ``rows = cols = 0`` and the
reserved slot holding the length of the table of contents.  The table of
contents is a JSON object ``{"meta": {...}, "arrays": [entry, ...]}`` where
each entry is ``{"name", "dtype", "shape", "offset", "nbytes"}``; ``dtype`` is
``"f8"`` or ``"u8"``, offsets count from the first payload byte, and payloads
are stored column-major little-endian.  All integers are little-endian.
"""

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"SMOR"
VERSION = 1
_HEADER = struct.Struct("<4sBQQQ")

_DTYPES = {"f8": np.dtype("<f8"), "u8": np.dtype("<u8")}


def write_matrix(path, matrix):
    """Write a 2D float matrix (1D input is stored as a column)."""
    a = np.asarray(matrix, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise FormatError(f"expected a 2D matrix, got shape {a.shape}")
    rows, cols = a.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, rows, cols, 0))
        fh.write(np.asfortranarray(a).astype("<f8", copy=False).tobytes(order="F"))
    tmp.replace(path)


def _read_header(fh, path):
    raw = fh.read(_HEADER.size)
    if len(raw) != _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, rows, cols, reserved = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    return rows, cols, reserved


def read_matrix(path):
    path = Path(path)
    with open(path, "rb") as fh:
        rows, cols, reserved = _read_header(fh, path)
        if reserved != 0:
            raise FormatError(f"{path}: is a container, not a snapshot matrix")
        data = fh.read()
    if len(data) != rows * cols * 8:
        raise FormatError(f"{path}: expected {rows * cols * 8} payload bytes, got {len(data)}")
    return np.frombuffer(data, dtype="<f8").reshape((rows, cols), order="F").astype(np.float64)


def write_container(path, arrays, meta=None):
    """Write named arrays plus a JSON-serialisable ``meta`` dict.

    Integer arrays are stored as u64, everything else as f64.
    """
    entries = []
    payloads = []
    offset = 0
    for name, value in arrays.items():
        a = np.asarray(value)
        if a.dtype.kind in "iub":
            if a.size and a.min() < 0:
                raise FormatError(f"array {name!r}: negative entries cannot be stored as u64")
            code = "u8"
        else:
            code = "f8"
        buf = np.asfortranarray(a).astype(_DTYPES[code], copy=False).tobytes(order="F")
        entries.append({"name": name, "dtype": code, "shape": list(a.shape),
                        "offset": offset, "nbytes": len(buf)})
        payloads.append(buf)
        offset += len(buf)
    toc = json.dumps({"meta": meta or {}, "arrays": entries}, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, 0, 0, len(toc)))
        fh.write(toc)
        for buf in payloads:
            fh.write(buf)
    tmp.replace(path)


def read_container(path):
    """Return ``(arrays, meta)`` from a container file."""
    path = Path(path)
    with open(path, "rb") as fh:
        rows, cols, toc_len = _read_header(fh, path)
        if rows != 0 or cols != 0 or toc_len == 0:
            raise FormatError(f"{path}: not a container file")
        toc = json.loads(fh.read(toc_len).decode("utf-8"))
        data = fh.read()
    arrays = {}
    for e in toc["arrays"]:
        dt = _DTYPES[e["dtype"]]
        chunk = data[e["offset"]:e["offset"] + e["nbytes"]]
        if len(chunk) != e["nbytes"]:
            raise FormatError(f"{path}: truncated payload for {e['name']!r}")
        a = np.frombuffer(chunk, dtype=dt).reshape(tuple(e["shape"]), order="F")
        arrays[e["name"]] = a.astype(np.int64 if e["dtype"] == "u8" else np.float64)
    return arrays, toc["meta"]
