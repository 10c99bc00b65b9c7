"""Statistical face model, coefficient vectors and mesh/albedo synthesis.

The expression mean is folded into the shape mean when a model is built, so
``mean_expression`` is stored as zeros and

    vertices = mean_shape + basis_shape @ alpha + basis_expression @ beta

Basis columns carry their standard deviation, so coefficients are in
std-units: a unit coefficient moves each vertex by ``sigma[k]`` millimetres
RMS (``basis[:, k] = sigma[k] * sqrt(n) * u_k`` for a unit vector ``u_k``).
The sigma vectors are kept alongside for reference and sampling.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.ndimage import gaussian_filter

from .container import read_container, write_container

N_LANDMARKS = 68
# iBUG 68-point convention (0-based): 0-16 jaw contour, 17-26 brows,
# 27-35 nose, 36-47 eyes, 48-67 mouth.
CONTOUR_LANDMARKS = tuple(range(17))


class DimensionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MorphableModel:
    mean_shape: np.ndarray
    mean_expression: np.ndarray
    mean_albedo: np.ndarray
    basis_shape: np.ndarray
    basis_expression: np.ndarray
    basis_albedo: np.ndarray
    sigma_shape: np.ndarray
    sigma_expression: np.ndarray
    sigma_albedo: np.ndarray
    faces: np.ndarray
    uv_coords: np.ndarray
    landmark_map: np.ndarray  # (m, 2) rows of (landmark_index, vertex_index)

    def __post_init__(self):
        n3 = self.mean_shape.shape[0]
        if n3 % 3:
            raise DimensionError("mean_shape length must be a multiple of 3")
        for name in ("mean_expression", "mean_albedo"):
            if getattr(self, name).shape != (n3,):
                raise DimensionError(f"{name} must have length {n3}")
        for name, sig in (("basis_shape", "sigma_shape"), ("basis_expression", "sigma_expression"),
                          ("basis_albedo", "sigma_albedo")):
            basis = getattr(self, name)
            if basis.ndim != 2 or basis.shape[0] != n3 or basis.shape[1] < 1:
                raise DimensionError(f"{name} must be (3n, K) with K >= 1")
            if getattr(self, sig).shape != (basis.shape[1],):
                raise DimensionError(f"{sig} must match {name} columns")
        n = n3 // 3
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= n):
            raise DimensionError("face index out of range")
        if self.uv_coords.shape != (n, 2):
            raise DimensionError("uv_coords must be (n, 2)")
        if np.any(self.uv_coords < 0) or np.any(self.uv_coords > 1):
            raise DimensionError("uv_coords must lie in [0, 1]^2")
        lm = self.landmark_map
        if lm.ndim != 2 or lm.shape[1] != 2 or np.any(lm[:, 1] < 0) or np.any(lm[:, 1] >= n):
            raise DimensionError("landmark_map vertex index out of range")
        for arr in (self.mean_shape, self.mean_expression, self.mean_albedo, self.basis_shape,
                    self.basis_expression, self.basis_albedo, self.sigma_shape,
                    self.sigma_expression, self.sigma_albedo, self.faces, self.uv_coords,
                    self.landmark_map):
            arr.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return self.mean_shape.shape[0] // 3

    @property
    def n_shape(self) -> int:
        return self.basis_shape.shape[1]

    @property
    def n_expression(self) -> int:
        return self.basis_expression.shape[1]

    @property
    def n_albedo(self) -> int:
        return self.basis_albedo.shape[1]

    @property
    def landmark_vertices(self) -> np.ndarray:
        """Vertex indices ordered by landmark index."""
        order = np.argsort(self.landmark_map[:, 0], kind="stable")
        return self.landmark_map[order, 1]

    def zero_params(self) -> "ProxyParams":
        return ProxyParams(np.zeros(self.n_shape), np.zeros(self.n_expression), np.zeros(self.n_albedo))


@dataclass
class ProxyParams:
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        self.gamma = np.asarray(self.gamma, dtype=float)

    def check(self, model: MorphableModel) -> None:
        if (self.alpha.shape != (model.n_shape,) or self.beta.shape != (model.n_expression,)
                or self.gamma.shape != (model.n_albedo,)):
            raise DimensionError(
                f"params ({self.alpha.size}, {self.beta.size}, {self.gamma.size}) do not match "
                f"model ({model.n_shape}, {model.n_expression}, {model.n_albedo})")


@dataclass
class AffineCamera:
    """2x4 affine projection, ``x = matrix @ [X, Y, Z, 1]``."""

    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        if self.matrix.shape != (2, 4):
            raise DimensionError("affine camera must be 2x4")
        if np.linalg.matrix_rank(self.matrix[:, :3]) != 2:
            raise ValueError("affine camera 2x3 block must have rank 2")

    def project(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        return points @ self.matrix[:, :3].T + self.matrix[:, 3]


def synthesize_vertices(model: MorphableModel, params: ProxyParams) -> np.ndarray:
    """Flat (3n,) vertex array for the given coefficients."""
    if params.alpha.shape != (model.n_shape,) or params.beta.shape != (model.n_expression,):
        raise DimensionError("alpha/beta length does not match the model bases")
    return (model.mean_shape + model.mean_expression
            + model.basis_shape @ params.alpha + model.basis_expression @ params.beta)


def synthesize_albedo(model: MorphableModel, params: ProxyParams) -> np.ndarray:
    """Flat (3n,) per-vertex RGB reflectance; not clamped."""
    if params.gamma.shape != (model.n_albedo,):
        raise DimensionError("gamma length does not match the albedo basis")
    return model.mean_albedo + model.basis_albedo @ params.gamma


def _landmark_uvs() -> np.ndarray:
    """Rough face layout of the 68 iBUG landmarks in the unit UV square."""
    pts = []
    t = np.linspace(-1.0, 1.0, 17)
    pts += [(0.5 + 0.36 * s, 0.42 + 0.4 * np.sqrt(1 - 0.85 * s * s)) for s in t]  # jaw
    for side in (-1, 1):  # brows
        for k in range(5):
            x = 0.5 + side * (0.08 + 0.05 * k)
            pts.append((x, 0.3 - 0.02 * np.sin(np.pi * k / 4)))
    pts = pts[:17] + sorted(pts[17:22], key=lambda p: p[0]) + sorted(pts[22:27], key=lambda p: p[0])
    pts += [(0.5, 0.38 + 0.05 * k) for k in range(4)]  # nose bridge
    pts += [(0.5 + 0.035 * k, 0.6) for k in range(-2, 3)]  # nostrils
    for cx in (0.36, 0.64):  # eyes
        for k in range(6):
            a = np.pi * k / 3
            pts.append((cx + 0.06 * np.cos(a + np.pi), 0.38 + 0.02 * np.sin(a)))
    for k in range(12):  # outer lip
        a = 2 * np.pi * k / 12
        pts.append((0.5 - 0.13 * np.cos(a), 0.72 + 0.05 * np.sin(a)))
    for k in range(8):  # inner lip
        a = 2 * np.pi * k / 8
        pts.append((0.5 - 0.08 * np.cos(a), 0.72 + 0.02 * np.sin(a)))
    return np.clip(np.array(pts, dtype=float), 0.0, 1.0)


def _affine_fields(points: np.ndarray, subset: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Deformations X -> A X + t of the whole point set, and of the ``subset``
    points alone (zero elsewhere); (3n, 12) each, unit columns."""
    n = len(points)
    hom = np.hstack([points, np.ones((n, 1))])
    full = np.zeros((n, 3, 12))
    local = np.zeros((n, 3, 12))
    for axis in range(3):
        full[:, axis, 4 * axis:4 * axis + 4] = hom
        local[subset, axis, 4 * axis:4 * axis + 4] = hom[subset]
    full = full.reshape(3 * n, 12)
    local = local.reshape(3 * n, 12)
    return full / np.linalg.norm(full, axis=0), local / np.linalg.norm(local, axis=0)


def _blur(fields: np.ndarray, rows: int, cols: int, channels: int) -> np.ndarray:
    k = fields.shape[1]
    sigma = (max(rows / 6, 0.5), max(cols / 6, 0.5), 0, 0)
    return gaussian_filter(fields.reshape(rows, cols, channels, k), sigma=sigma, mode="nearest").reshape(-1, k)


def _smooth_orthogonal_basis(rng: np.random.Generator, rows: int, cols: int, k: int,
                             constraints: Tuple[np.ndarray, np.ndarray] | None = None,
                             channels: int = 3) -> np.ndarray:
    """Orthonormal smooth random fields on the vertex grid.

    With ``constraints = (full, local)`` the fields are orthogonal to both
    sets of affine deformations.  The correction that enforces this is drawn
    from the global affine fields and blurred copies of the local ones, so
    the result stays smooth.
    """
    n3 = rows * cols * channels
    free = n3 - (0 if constraints is None else 24)
    if k > free:
        raise DimensionError(f"basis size {k} exceeds available dimension {free}")
    raw = _blur(rng.standard_normal((n3, k)), rows, cols, channels)
    if constraints is not None:
        full, local = constraints
        C = np.hstack([full, local])
        W = np.hstack([full, _blur(local, rows, cols, channels)])
        raw -= W @ np.linalg.solve(C.T @ W, C.T @ raw)
    q, r = np.linalg.qr(raw)
    # Deterministic sign so that the model does not depend on LAPACK's choice.
    q *= np.where(np.diag(r) < 0, -1.0, 1.0)
    return q


def grid_mesh(rows: int, cols: int) -> Tuple[np.ndarray, np.ndarray]:
    """Faces and UVs for a rows x cols vertex grid (u along columns, v down rows)."""
    idx = np.arange(rows * cols).reshape(rows, cols)
    a, b = idx[:-1, :-1].ravel(), idx[:-1, 1:].ravel()
    c, d = idx[1:, :-1].ravel(), idx[1:, 1:].ravel()
    faces = np.concatenate([np.stack([a, b, c], 1), np.stack([b, d, c], 1)])
    vv, uu = np.meshgrid(np.linspace(0, 1, rows), np.linspace(0, 1, cols), indexing="ij")
    return faces.astype(np.int64), np.stack([uu.ravel(), vv.ravel()], 1)


def generate_synthetic_model(seed: int, n_vertices: int = 1024, Ks: int = 40, Ke: int = 20,
                             Ka: int = 40, radius: float = 90.0) -> MorphableModel:
    """Deterministic stand-in for a licensed face model.

    The mesh is a ``s x s`` grid with ``s = round(sqrt(n_vertices))`` laid out as
    a spherical cap with a nose bump, x to the right, y down, z toward the
    viewer; its faces are wound so that normals point outward (+z at center).
    """
    if n_vertices < N_LANDMARKS:
        raise DimensionError(f"need at least {N_LANDMARKS} vertices to place the landmarks")
    if min(Ks, Ke, Ka) < 1:
        raise DimensionError("basis sizes must be >= 1")
    side = max(int(round(np.sqrt(n_vertices))), 9)
    rng = np.random.default_rng(seed)

    faces, uv = grid_mesh(side, side)
    u, v = uv[:, 0], uv[:, 1]
    phi = (u - 0.5) * 1.6
    psi = (v - 0.5) * 1.6
    bump = 1.0 + 0.12 * np.exp(-((u - 0.5) ** 2 + (v - 0.52) ** 2) / 0.006)
    r = radius * bump
    mean = np.stack([r * np.cos(psi) * np.sin(phi), r * np.sin(psi), r * np.cos(psi) * np.cos(phi)], 1)

    # Landmarks: nearest free grid vertex to each template position.
    lm_vertices = []
    taken = set()
    for lu, lv in _landmark_uvs():
        order = np.argsort((u - lu) ** 2 + (v - lv) ** 2, kind="stable")
        vid = next(int(i) for i in order if int(i) not in taken)
        taken.add(vid)
        lm_vertices.append(vid)
    landmark_map = np.stack([np.arange(N_LANDMARKS), np.array(lm_vertices)], 1)

    # Geometry bases carry no affine component, globally or over the landmark
    # vertices (as after Procrustes alignment): the affine camera absorbs such
    # deformations and they only slow down the camera/shape alternation.
    affine = _affine_fields(mean, np.array(lm_vertices))
    sig_s = 6.0 / np.sqrt(1.0 + np.arange(Ks))
    sig_e = 4.0 / np.sqrt(1.0 + np.arange(Ke))
    sig_a = 0.04 / np.sqrt(1.0 + np.arange(Ka))
    basis_s = _smooth_orthogonal_basis(rng, side, side, Ks, affine) * sig_s
    basis_e = _smooth_orthogonal_basis(rng, side, side, Ke, affine) * sig_e
    basis_a = _smooth_orthogonal_basis(rng, side, side, Ka) * sig_a
    scale = np.sqrt(side * side)
    basis_s *= scale
    basis_e *= scale
    basis_a *= scale

    albedo = np.tile([0.72, 0.52, 0.42], side * side) + 0.03 * np.repeat(np.cos(3 * u) * np.cos(2 * v), 3)


    return MorphableModel(
        mean_shape=mean.ravel(), mean_expression=np.zeros(mean.size), mean_albedo=albedo,
        basis_shape=basis_s, basis_expression=basis_e, basis_albedo=basis_a,
        sigma_shape=sig_s, sigma_expression=sig_e, sigma_albedo=sig_a,
        faces=faces, uv_coords=uv, landmark_map=landmark_map.astype(np.int64))


_MODEL_FIELDS = ("mean_shape", "mean_expression", "mean_albedo", "basis_shape",
                 "basis_expression", "basis_albedo", "sigma_shape", "sigma_expression",
                 "sigma_albedo", "faces", "uv_coords", "landmark_map")


def save_model(model: MorphableModel, path: str | os.PathLike) -> None:
    write_container(path, "morphable_model", {name: getattr(model, name) for name in _MODEL_FIELDS},
                    attrs={"schema": "1", "expression_mean": "folded_into_shape_mean"})


def load_model(path: str | os.PathLike) -> MorphableModel:
    kind, _, arrays = read_container(path)
    if kind != "morphable_model":
        raise ValueError(f"{path}: expected a morphable_model container, got {kind}")
    missing = [f for f in _MODEL_FIELDS if f not in arrays]
    if missing:
        raise ValueError(f"{path}: missing fields {missing}")
    # Fold any stored expression mean into the shape mean.
    mean_shape = arrays["mean_shape"] + arrays["mean_expression"]
    arrays["mean_expression"] = np.zeros_like(mean_shape)
    arrays["mean_shape"] = mean_shape
    return MorphableModel(**{f: arrays[f] for f in _MODEL_FIELDS})
