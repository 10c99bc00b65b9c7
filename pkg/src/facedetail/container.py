"""Binary array container shared by the morphable model and PCA model files.

Layout::

    FACEDETAIL-CONTAINER 1\n
    kind <kind>\n
    attr <key> <value>\n            (zero or more)
    field <name> <dtype> <dims> <offset> <nbytes>\n   (one per array)
    end\n
    <blobs>

``dims`` is comma separated (``-`` for a scalar), ``offset`` is relative to the
first byte after the ``end`` line.  Blobs are little-endian; float arrays are
stored as ``<f4`` and integer arrays as ``<i4``.  Fields appear in the header
in the same order as their blobs.
"""

from __future__ import annotations

import os
from typing import Dict, Mapping, Tuple

import numpy as np

MAGIC = "FACEDETAIL-CONTAINER 1"


class ContainerError(ValueError):
    pass


def _storage_dtype(arr: np.ndarray) -> np.dtype:
    if np.issubdtype(arr.dtype, np.integer) or arr.dtype == np.bool_:
        return np.dtype("<i4")
    return np.dtype("<f4")


def write_container(path: str | os.PathLike, kind: str, arrays: Mapping[str, np.ndarray],
                    attrs: Mapping[str, str] | None = None) -> None:
    lines = [MAGIC, f"kind {kind}"]
    for key, value in (attrs or {}).items():
        value = str(value)
        if any(c.isspace() for c in key) or "\n" in value:
            raise ContainerError(f"bad attribute {key!r}")
        lines.append(f"attr {key} {value}")

    blobs = []
    offset = 0
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        blob = np.ascontiguousarray(arr.astype(_storage_dtype(arr))).tobytes()
        dims = ",".join(str(d) for d in arr.shape) or "-"
        lines.append(f"field {name} {_storage_dtype(arr).str} {dims} {offset} {len(blob)}")
        blobs.append(blob)
        offset += len(blob)
    lines.append("end")

    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        for blob in blobs:
            fh.write(blob)


def read_container(path: str | os.PathLike) -> Tuple[str, Dict[str, str], Dict[str, np.ndarray]]:
    """Return ``(kind, attrs, arrays)``; arrays come back as float64 / int64."""
    with open(path, "rb") as fh:
        raw = fh.read()

    pos = 0
    header = []
    while True:
        nl = raw.find(b"\n", pos)
        if nl < 0:
            raise ContainerError(f"{path}: truncated header")
        line = raw[pos:nl].decode("ascii")
        pos = nl + 1
        if line == "end":
            break
        header.append(line)

    if not header or header[0] != MAGIC:
        raise ContainerError(f"{path}: not a facedetail container")
    kind = None
    attrs: Dict[str, str] = {}
    arrays: Dict[str, np.ndarray] = {}
    data = raw[pos:]
    for line in header[1:]:
        tag, _, rest = line.partition(" ")
        if tag == "kind":
            kind = rest
        elif tag == "attr":
            key, _, value = rest.partition(" ")
            attrs[key] = value
        elif tag == "field":
            name, dtype, dims, offset, nbytes = rest.split(" ")
            shape = () if dims == "-" else tuple(int(d) for d in dims.split(","))
            offset, nbytes = int(offset), int(nbytes)
            if offset + nbytes > len(data):
                raise ContainerError(f"{path}: field {name} runs past end of file")
            arr = np.frombuffer(data[offset:offset + nbytes], dtype=np.dtype(dtype)).reshape(shape)
            target = np.int64 if np.dtype(dtype).kind == "i" else np.float64
            arrays[name] = arr.astype(target)
        else:
            raise ContainerError(f"{path}: unknown header line {line!r}")
    if kind is None:
        raise ContainerError(f"{path}: missing kind")
    return kind, attrs, arrays
