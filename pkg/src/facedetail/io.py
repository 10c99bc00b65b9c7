"""File formats: PFM maps, OBJ meshes, PNG images, landmark/lighting text files
and the JSON records exchanged between CLI stages."""

from __future__ import annotations

import json
import os
from typing import Optional, Tuple

import numpy as np
from PIL import Image

SCHEMA_VERSION = 1


class SchemaError(ValueError):
    pass


# -- PFM ---------------------------------------------------------------------

def write_pfm(path: str | os.PathLike, data: np.ndarray) -> None:
    """Little-endian PFM, rows stored top-to-bottom reversed per the PFM convention."""
    data = np.asarray(data, dtype="<f4")
    if data.ndim == 2:
        tag, h, w = b"Pf", *data.shape
    elif data.ndim == 3 and data.shape[2] == 3:
        tag, h, w = b"PF", data.shape[0], data.shape[1]
    else:
        raise ValueError("PFM supports H x W or H x W x 3 arrays")
    with open(path, "wb") as fh:
        fh.write(tag + b"\n" + f"{w} {h}\n".encode() + b"-1.0\n")
        fh.write(np.ascontiguousarray(data[::-1]).tobytes())


def read_pfm(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        tag = fh.readline().strip()
        if tag not in (b"PF", b"Pf"):
            raise ValueError(f"{path}: not a PFM file")
        w, h = (int(x) for x in fh.readline().split())
        scale = float(fh.readline())
        dtype = "<f4" if scale < 0 else ">f4"
        channels = 3 if tag == b"PF" else 1
        data = np.frombuffer(fh.read(), dtype=dtype, count=w * h * channels)
    shape = (h, w, 3) if channels == 3 else (h, w)
    return data.reshape(shape)[::-1].astype(np.float64)


# -- PNG ---------------------------------------------------------------------

def read_png(path: str | os.PathLike) -> np.ndarray:
    """RGB image as floats in [0, 1] (plain /255, no gamma handling)."""
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0


def write_png(path: str | os.PathLike, image: np.ndarray) -> None:
    image = np.clip(np.nan_to_num(np.asarray(image, dtype=float)), 0.0, 1.0)
    arr = np.round(image * 255.0).astype(np.uint8)
    Image.fromarray(arr).save(path, format="PNG", optimize=False)


def read_image(path: str | os.PathLike) -> np.ndarray:
    path = str(path)
    if path.lower().endswith(".pfm"):
        img = read_pfm(path)
        return img if img.ndim == 3 else np.repeat(img[..., None], 3, axis=2)
    return read_png(path)


# -- OBJ ---------------------------------------------------------------------

def write_obj(path: str | os.PathLike, vertices: np.ndarray, faces: np.ndarray,
              uvs: Optional[np.ndarray] = None, colors: Optional[np.ndarray] = None) -> None:
    """OBJ with optional per-vertex UVs (one vt per vertex) and vertex colors."""
    vertices = np.asarray(vertices, dtype=float).reshape(-1, 3)
    lines = []
    for i, p in enumerate(vertices):
        line = f"v {p[0]:.9g} {p[1]:.9g} {p[2]:.9g}"
        if colors is not None:
            c = np.clip(colors[i], 0.0, 1.0)
            line += f" {c[0]:.6g} {c[1]:.6g} {c[2]:.6g}"
        lines.append(line)
    if uvs is not None:
        lines += [f"vt {t[0]:.9g} {1.0 - t[1]:.9g}" for t in uvs]
        lines += [f"f {a + 1}/{a + 1} {b + 1}/{b + 1} {c + 1}/{c + 1}" for a, b, c in faces]
    else:
        lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in faces]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_obj(path: str | os.PathLike) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    """Return ``(vertices, faces, per-vertex uvs or None)``.

    UVs are taken from the ``vt`` referenced by each face corner; a vertex used
    with two different UVs (a seam) keeps the first one.  OBJ ``vt`` has v
    upward; it is flipped here to the top-left texture origin used throughout.
    """
    verts, tex, faces, face_tex = [], [], [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "vt":
                tex.append([float(parts[1]), 1.0 - float(parts[2])])
            elif parts[0] == "f":
                corners = [c.split("/") for c in parts[1:]]
                vi = [int(c[0]) - 1 for c in corners]
                ti = [int(c[1]) - 1 if len(c) > 1 and c[1] else -1 for c in corners]
                for k in range(1, len(vi) - 1):  # fan triangulation
                    faces.append([vi[0], vi[k], vi[k + 1]])
                    face_tex.append([ti[0], ti[k], ti[k + 1]])
    vertices = np.array(verts, dtype=float).reshape(-1, 3)
    faces_arr = np.array(faces, dtype=np.int64).reshape(-1, 3)
    uvs = None
    if tex:
        tex_arr = np.array(tex, dtype=float)
        uvs = np.full((len(vertices), 2), np.nan)
        for f, t in zip(faces_arr, face_tex):
            for v, ti in zip(f, t):
                if ti >= 0 and np.isnan(uvs[v, 0]):
                    uvs[v] = tex_arr[ti]
        if np.isnan(uvs).any():
            uvs = np.nan_to_num(uvs)
    return vertices, faces_arr, uvs


# -- landmarks / lighting ----------------------------------------------------

def read_landmarks(path: str | os.PathLike) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Parse ``index x y [weight]`` lines; returns (indices, points, weights or NaN)."""
    idx, pts, wts = [], [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) not in (3, 4):
                raise ValueError(f"{path}:{lineno}: expected 'index x y [weight]'")
            idx.append(int(parts[0]))
            pts.append([float(parts[1]), float(parts[2])])
            wts.append(float(parts[3]) if len(parts) == 4 else np.nan)
    return np.array(idx, dtype=np.int64), np.array(pts, dtype=float).reshape(-1, 2), np.array(wts)


def write_landmarks(path: str | os.PathLike, points: np.ndarray, weights: Optional[np.ndarray] = None) -> None:
    with open(path, "w") as fh:
        for i, (x, y) in enumerate(np.asarray(points, dtype=float).tolist()):
            if weights is None:
                fh.write(f"{i} {x!r} {y!r}\n")
            else:
                fh.write(f"{i} {x!r} {y!r} {float(weights[i])!r}\n")


def write_lighting(path: str | os.PathLike, coeffs: np.ndarray) -> None:
    """One line per channel, nine coefficients each."""
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
    with open(path, "w") as fh:
        for row in coeffs:
            fh.write(" ".join(repr(float(c)) for c in row) + "\n")


def read_lighting(path: str | os.PathLike) -> np.ndarray:
    values = np.loadtxt(path, dtype=float, ndmin=1).ravel()
    if values.size not in (9, 27):
        raise ValueError(f"{path}: expected 9 or 27 coefficients, found {values.size}")
    return values.reshape(-1, 9)


# -- stage records -----------------------------------------------------------

def write_record(path: str | os.PathLike, kind: str, payload: dict) -> None:
    record = {"schema": f"facedetail/{kind}", "version": SCHEMA_VERSION, **payload}
    with open(path, "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_record(path: str | os.PathLike, kind: str) -> dict:
    with open(path) as fh:
        record = json.load(fh)
    if record.get("schema") != f"facedetail/{kind}":
        raise SchemaError(f"{path}: expected schema facedetail/{kind}, found {record.get('schema')}")
    if record.get("version") != SCHEMA_VERSION:
        raise SchemaError(f"{path}: unsupported version {record.get('version')}")
    return record
