"""Deterministic on-disk containers for models and embedding caches.

A container file is a single JSON header line followed by the raw bytes of
each array, concatenated in header order.  Field ordering, float formatting
and array byte order are all pinned so that identical inputs serialize to
identical bytes.
"""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any, Mapping

import numpy as np

_HEADER_SENTINEL = "chitchat-container"
_ALLOWED_DTYPES = {"<f8", "<i8"}


def canonical_json(obj: Any) -> str:
    """Serialize to JSON with sorted keys and no whitespace."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=True, separators=(",", ":"))


def atomic_write_bytes(path: str | Path, payload: bytes) -> None:
    """Write a file via a temp sibling and rename, so readers never see partial content."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _normalize_array(arr: np.ndarray) -> np.ndarray:
    if arr.dtype.kind == "f":
        out = np.ascontiguousarray(arr, dtype="<f8")
    elif arr.dtype.kind in ("i", "u"):
        out = np.ascontiguousarray(arr, dtype="<i8")
    else:
        raise ValueError(f"unsupported array dtype {arr.dtype}")
    return out


def container_bytes(kind: str, meta: Mapping[str, Any], arrays: Mapping[str, np.ndarray]) -> bytes:
    """Render a container to bytes; arrays are stored sorted by name."""
    entries = []
    blobs = []
    for name in sorted(arrays):
        arr = _normalize_array(arrays[name])
        raw = arr.tobytes(order="C")
        entries.append(
            {"name": name, "dtype": str(arr.dtype.str), "shape": list(arr.shape), "nbytes": len(raw)}
        )
        blobs.append(raw)
    header = {
        "format": _HEADER_SENTINEL,
        "kind": kind,
        "version": 1,
        "meta": dict(meta),
        "arrays": entries,
    }
    head = canonical_json(header).encode("utf-8") + b"\n"
    return head + b"".join(blobs)


def write_container(
    path: str | Path, kind: str, meta: Mapping[str, Any], arrays: Mapping[str, np.ndarray]
) -> None:
    atomic_write_bytes(path, container_bytes(kind, meta, arrays))


def read_container(path: str | Path, kind: str | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    """Load a container; verifies the format sentinel and optional kind."""
    with open(path, "rb") as fh:
        head_line = fh.readline()
        body = fh.read()
    try:
        header = json.loads(head_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise ValueError(f"{path}: not a recognized container file") from None
    if not isinstance(header, dict) or header.get("format") != _HEADER_SENTINEL:
        raise ValueError(f"{path}: not a recognized container file")
    if kind is not None and header.get("kind") != kind:
        raise ValueError(f"{path}: expected kind {kind!r}, found {header.get('kind')!r}")
    arrays: dict[str, np.ndarray] = {}
    offset = 0
    for entry in header["arrays"]:
        dtype = entry["dtype"]
        if dtype not in _ALLOWED_DTYPES:
            raise ValueError(f"{path}: unsupported dtype {dtype!r}")
        n = entry["nbytes"]
        chunk = body[offset : offset + n]
        if len(chunk) != n:
            raise ValueError(f"{path}: truncated array {entry['name']!r}")
        arrays[entry["name"]] = np.frombuffer(chunk, dtype=dtype).reshape(entry["shape"]).copy()
        offset += n
    if offset != len(body):
        raise ValueError(f"{path}: trailing bytes after last array")
    return header["meta"], arrays
