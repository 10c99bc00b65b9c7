"""Texture-space geometry.

Conventions: texel ``(i, j)`` (row, column) has its center at
``u = (j + 0.5) / W``, ``v = (i + 0.5) / H``; u runs rightward and v downward
from the top-left corner.  Displacement is signed millimetres along the proxy
normal.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .model_core import MorphableModel, ProxyParams, synthesize_vertices

log = logging.getLogger(__name__)

TANGENT_EPS = 1e-12


@dataclass
class GeometryMaps:
    position: np.ndarray  # (H, W, 3)
    normal: np.ndarray    # (H, W, 3)
    mask: np.ndarray      # (H, W) bool

    @property
    def resolution(self) -> int:
        return self.mask.shape[0]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.mask.shape

    def crop(self, row: int, col: int, size: int) -> "GeometryMaps":
        sl = (slice(row, row + size), slice(col, col + size))
        return GeometryMaps(self.position[sl], self.normal[sl], self.mask[sl])


@dataclass
class DisplacementMap:
    values: np.ndarray  # (H, W)
    mask: np.ndarray

    @classmethod
    def zeros_like(cls, maps: GeometryMaps) -> "DisplacementMap":
        return cls(np.zeros(maps.shape), maps.mask.copy())


@dataclass(frozen=True)
class PatchGrid:
    patch_size: int = 256
    stride: int = 128

    def __post_init__(self):
        if self.patch_size < 2 or self.patch_size % 2:
            raise ValueError("patch_size must be even and >= 2")
        if self.stride * 2 != self.patch_size:
            raise ValueError("stride must be half the patch size")

    def axis_origins(self, length: int) -> List[int]:
        if length < self.patch_size:
            raise ValueError(f"map size {length} is smaller than the patch size {self.patch_size}")
        starts = list(range(0, length - self.patch_size + 1, self.stride))
        if starts[-1] != length - self.patch_size:  # not stride aligned: add a border-flush patch
            starts.append(length - self.patch_size)
        return starts

    def origins(self, shape: Tuple[int, int]) -> List[Tuple[int, int]]:
        """Patch top-left corners in row-major order."""
        rows = self.axis_origins(shape[0])
        cols = self.axis_origins(shape[1])
        return [(r, c) for r in rows for c in cols]


# -- rasterization -----------------------------------------------------------

@dataclass
class Raster:
    """Per-texel triangle id (-1 where uncovered) and barycentric weights."""

    face: np.ndarray  # (H, W) int
    bary: np.ndarray  # (H, W, 3)
    skipped: int = 0

    @property
    def mask(self) -> np.ndarray:
        return self.face >= 0

    def interpolate(self, faces: np.ndarray, attr: np.ndarray) -> np.ndarray:
        """Barycentric interpolation of a per-vertex attribute; zero off the mask."""
        attr = np.asarray(attr, dtype=float)
        attr2 = attr.reshape(len(attr), -1)
        out = np.zeros(self.face.shape + (attr2.shape[1],))
        m = self.mask
        tri = faces[self.face[m]]
        b = self.bary[m]
        out[m] = (b[:, 0:1] * attr2[tri[:, 0]] + b[:, 1:2] * attr2[tri[:, 1]]
                  + b[:, 2:3] * attr2[tri[:, 2]])
        return out.reshape(self.face.shape + attr.shape[1:])


def rasterize_uv(faces: np.ndarray, uvs: np.ndarray, resolution: int) -> Raster:
    """Scan-convert UV triangles at texel centers (edges inclusive, first face wins)."""
    if resolution < 4:
        raise ValueError("resolution must be >= 4")
    H = W = int(resolution)
    face_id = np.full((H, W), -1, dtype=np.int64)
    bary = np.zeros((H, W, 3))
    px = np.asarray(uvs, dtype=float) * [W, H] - 0.5  # texel-center coordinates
    skipped = 0
    eps = 1e-9
    for f, (a, b, c) in enumerate(faces):
        p0, p1, p2 = px[a], px[b], px[c]
        area = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1])
        if abs(area) < 1e-12:
            skipped += 1
            continue
        lo = np.maximum(np.ceil(np.minimum(np.minimum(p0, p1), p2) - eps), 0).astype(int)
        hi = np.minimum(np.floor(np.maximum(np.maximum(p0, p1), p2) + eps), [W - 1, H - 1]).astype(int)
        if lo[0] > hi[0] or lo[1] > hi[1]:
            continue
        jj, ii = np.meshgrid(np.arange(lo[0], hi[0] + 1), np.arange(lo[1], hi[1] + 1))
        x, y = jj.astype(float), ii.astype(float)
        w0 = ((p1[0] - x) * (p2[1] - y) - (p2[0] - x) * (p1[1] - y)) / area
        w1 = ((p2[0] - x) * (p0[1] - y) - (p0[0] - x) * (p2[1] - y)) / area
        w2 = 1.0 - w0 - w1
        inside = (w0 >= -eps) & (w1 >= -eps) & (w2 >= -eps)
        free = face_id[ii, jj] < 0
        sel = inside & free
        if not sel.any():
            continue
        face_id[ii[sel], jj[sel]] = f
        bary[ii[sel], jj[sel]] = np.stack([w0[sel], w1[sel], w2[sel]], axis=1)
    if skipped:
        log.warning("skipped %d degenerate UV triangles", skipped)
    return Raster(face_id, bary, skipped)


def vertex_normals(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Area-weighted vertex normals, unit length (zero for isolated vertices)."""
    v = np.asarray(vertices, dtype=float).reshape(-1, 3)
    fn = np.cross(v[faces[:, 1]] - v[faces[:, 0]], v[faces[:, 2]] - v[faces[:, 0]])
    vn = np.zeros_like(v)
    for k in range(3):
        np.add.at(vn, faces[:, k], fn)
    n = np.linalg.norm(vn, axis=1, keepdims=True)
    return np.divide(vn, n, out=np.zeros_like(vn), where=n > 0)


def rasterize_mesh(vertices: np.ndarray, faces: np.ndarray, uvs: np.ndarray, resolution: int,
                   raster: Optional[Raster] = None) -> GeometryMaps:
    verts = np.asarray(vertices, dtype=float).reshape(-1, 3)
    raster = raster or rasterize_uv(faces, uvs, resolution)
    position = raster.interpolate(faces, verts)
    normal = raster.interpolate(faces, vertex_normals(verts, faces))
    n = np.linalg.norm(normal, axis=2, keepdims=True)
    mask = raster.mask & (n[..., 0] > 0)
    normal = np.divide(normal, n, out=np.zeros_like(normal), where=n > 0)
    position[~mask] = 0.0
    normal[~mask] = 0.0
    return GeometryMaps(position, normal, mask)


def rasterize_maps(model: MorphableModel, params: ProxyParams, resolution: int) -> GeometryMaps:
    """Position and normal maps of the proxy mesh in texture space."""
    return rasterize_mesh(synthesize_vertices(model, params), model.faces, model.uv_coords, resolution)


def sample_at_uv(image: np.ndarray, uvs: np.ndarray) -> np.ndarray:
    """Bilinear lookup of a texture at UV coordinates (clamped to the border)."""
    img = np.asarray(image, dtype=float)
    H, W = img.shape[:2]
    x = np.clip(np.asarray(uvs)[:, 0] * W - 0.5, 0, W - 1)
    y = np.clip(np.asarray(uvs)[:, 1] * H - 0.5, 0, H - 1)
    return bilinear(img, x, y)


def bilinear(img: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    H, W = img.shape[:2]
    x0 = np.clip(np.floor(x).astype(int), 0, W - 2 if W > 1 else 0)
    y0 = np.clip(np.floor(y).astype(int), 0, H - 2 if H > 1 else 0)
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    fx = x - x0
    fy = y - y0
    if img.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    return ((1 - fy) * ((1 - fx) * img[y0, x0] + fx * img[y0, x1])
            + fy * ((1 - fx) * img[y1, x0] + fx * img[y1, x1]))


# -- displacement and normals ------------------------------------------------

def apply_displacement(maps: GeometryMaps, disp: DisplacementMap) -> np.ndarray:
    """Fine position map: proxy position plus displacement along the proxy normal."""
    if disp.values.shape != maps.shape:
        raise ValueError(f"displacement {disp.values.shape} does not match maps {maps.shape}")
    fine = maps.position + disp.values[..., None] * maps.normal
    fine[~maps.mask] = 0.0
    return fine


@dataclass
class Stencil:
    """Per-texel weights of the masked [-0.5, 0, 0.5] difference.

    ``d[i, j] = plus * P[next] + center * P[i, j] + minus * P[prev]`` where
    next/prev are the neighbours along the axis.  Where a neighbour is missing
    the stencil falls back to a one-sided difference; where both are missing
    all weights are zero and the texel is invalid.
    """

    plus: np.ndarray
    center: np.ndarray
    minus: np.ndarray

    @property
    def valid(self) -> np.ndarray:
        return (self.plus != 0) | (self.minus != 0)


def _shift(a: np.ndarray, offset: int, axis: int) -> np.ndarray:
    """``out[k] = a[k + offset]`` along ``axis``, zero-filled."""
    out = np.zeros_like(a)
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if offset > 0:
        src[axis], dst[axis] = slice(offset, None), slice(None, -offset)
    else:
        src[axis], dst[axis] = slice(None, offset), slice(-offset, None)
    out[tuple(dst)] = a[tuple(src)]
    return out


def difference_stencil(mask: np.ndarray, axis: int) -> Stencil:
    mask = np.asarray(mask, dtype=bool)
    has_next = mask & _shift(mask, 1, axis)
    has_prev = mask & _shift(mask, -1, axis)
    both = has_next & has_prev
    only_next = has_next & ~has_prev
    only_prev = has_prev & ~has_next
    plus = np.where(both, 0.5, 0.0) + np.where(only_next, 1.0, 0.0)
    minus = np.where(both, -0.5, 0.0) + np.where(only_prev, -1.0, 0.0)
    center = np.where(only_next, -1.0, 0.0) + np.where(only_prev, 1.0, 0.0)
    return Stencil(plus, center, minus)


def apply_stencil(P: np.ndarray, st: Stencil, axis: int) -> np.ndarray:
    return (st.plus[..., None] * _shift(P, 1, axis) + st.center[..., None] * P
            + st.minus[..., None] * _shift(P, -1, axis))


def apply_stencil_adjoint(G: np.ndarray, st: Stencil, axis: int) -> np.ndarray:
    """Adjoint of :func:`apply_stencil`: maps dL/d(difference) to dL/dP."""
    return (_shift(st.plus[..., None] * G, -1, axis) + st.center[..., None] * G
            + _shift(st.minus[..., None] * G, 1, axis))


@dataclass
class NormalTrace:
    """Intermediates of :func:`compute_normals`, kept for back-propagation."""

    h_stencil: Stencil
    v_stencil: Stencil
    tangent_u: np.ndarray
    tangent_v: np.ndarray
    cross: np.ndarray
    norm: np.ndarray
    orientation: float


def normals_with_trace(position: np.ndarray, mask: np.ndarray, orientation: float = 1.0
                       ) -> Tuple[np.ndarray, np.ndarray, NormalTrace]:
    mask = np.asarray(mask, dtype=bool)
    hs = difference_stencil(mask, axis=1)
    vs = difference_stencil(mask, axis=0)
    tu = apply_stencil(position, hs, 1)
    tv = apply_stencil(position, vs, 0)
    cr = orientation * np.cross(tu, tv)
    nrm = np.linalg.norm(cr, axis=2)
    tlen = np.linalg.norm(tu, axis=2) * np.linalg.norm(tv, axis=2)
    valid = mask & hs.valid & vs.valid & (nrm > TANGENT_EPS * np.maximum(tlen, TANGENT_EPS))
    normal = np.zeros_like(position)
    normal[valid] = cr[valid] / nrm[valid, None]
    return normal, valid, NormalTrace(hs, vs, tu, tv, cr, nrm, orientation)


def compute_normals(position: np.ndarray, mask: np.ndarray, orientation: float = 1.0
                    ) -> Tuple[np.ndarray, np.ndarray]:
    """Unit normals from central position differences along u and v.

    Returns ``(normals, valid)``; ``valid`` drops texels whose tangents vanish
    or which lack a neighbour along either axis.  ``orientation`` (+1 or -1)
    flips the cross product for atlases whose UV layout is mirrored relative
    to the surface.
    """
    normal, valid, _ = normals_with_trace(position, mask, orientation)
    return normal, valid


def normals_backward(grad_normal: np.ndarray, valid: np.ndarray, trace: NormalTrace) -> np.ndarray:
    """Back-propagate dL/dN through normalization, cross product and stencils to dL/dP."""
    g = np.where(valid[..., None], grad_normal, 0.0)
    nrm = np.where(valid, trace.norm, 1.0)[..., None]
    n = trace.cross / nrm
    # d(c/|c|) = (I - n n^T) / |c|
    gc = (g - n * np.sum(n * g, axis=2, keepdims=True)) / nrm
    gc = np.where(valid[..., None], gc, 0.0) * trace.orientation
    g_tu = np.cross(trace.tangent_v, gc)   # c = tu x tv  ->  dL/dtu = tv x gc
    g_tv = np.cross(gc, trace.tangent_u)   #                dL/dtv = gc x tu
    return apply_stencil_adjoint(g_tu, trace.h_stencil, 1) + apply_stencil_adjoint(g_tv, trace.v_stencil, 0)


def detect_orientation(maps: GeometryMaps) -> float:
    """+1 if stencil normals agree with the rasterized proxy normals on most texels, else -1."""
    n, valid = compute_normals(maps.position, maps.mask)
    agree = np.sum(n[valid] * maps.normal[valid], axis=1)
    return 1.0 if np.sum(agree >= 0) >= np.sum(agree < 0) else -1.0


def displacement_from_pair(fine_maps: GeometryMaps, smooth_maps: GeometryMaps) -> DisplacementMap:
    """Signed offset of the fine surface along the smooth surface normal."""
    if fine_maps.shape != smooth_maps.shape:
        raise ValueError("map resolutions differ")
    if not np.array_equal(fine_maps.mask, smooth_maps.mask):
        raise ValueError("fine and smooth masks differ")
    d = np.sum((fine_maps.position - smooth_maps.position) * smooth_maps.normal, axis=2)
    d[~smooth_maps.mask] = 0.0
    return DisplacementMap(d, smooth_maps.mask.copy())


# -- patches -----------------------------------------------------------------

def sample_patches(values: np.ndarray, grid: PatchGrid = PatchGrid()) -> Tuple[np.ndarray, List[Tuple[int, int]]]:
    """Patches on the 50%-overlap grid (row-major) and their origins."""
    origins = grid.origins(values.shape[:2])
    s = grid.patch_size
    patches = np.stack([values[r:r + s, c:c + s] for r, c in origins])
    return patches, origins


def hann_window(size: int) -> np.ndarray:
    """Separable raised-cosine weight; shifted copies at half-size stride sum to one."""
    w = np.sin(np.pi * (np.arange(size) + 0.5) / size) ** 2
    return np.outer(w, w)


def blend_patches(patches: Sequence[np.ndarray], origins: Sequence[Tuple[int, int]],
                  shape: Tuple[int, int] | int, mask: Optional[np.ndarray] = None) -> DisplacementMap:
    """Hann-weighted average of overlapping patches.

    Texels covered by no patch get mask False; if such a texel lies inside
    ``mask`` a warning is logged.
    """
    if isinstance(shape, int):
        shape = (shape, shape)
    num = np.zeros(shape)
    den = np.zeros(shape)
    windows = {}
    for patch, (r, c) in zip(patches, origins):
        ph, pw = patch.shape[:2]
        if ph != pw:
            raise ValueError("patches must be square")
        if r < 0 or c < 0 or r + ph > shape[0] or c + pw > shape[1]:
            raise ValueError(f"patch at {(r, c)} falls outside the map")
        w = windows.setdefault(ph, hann_window(ph))
        num[r:r + ph, c:c + pw] += w * patch
        den[r:r + ph, c:c + pw] += w
    covered = den > 0
    values = np.divide(num, den, out=np.zeros(shape), where=covered)
    out_mask = covered if mask is None else (covered & mask)
    if mask is not None:
        holes = int(np.sum(mask & ~covered))
        if holes:
            log.warning("%d masked texels are not covered by any patch", holes)
    return DisplacementMap(values, out_mask)


@dataclass
class SamplerConfig:
    patch_size: int = 256
    sigma: float = 64.0
    gain: float = 0.9


def sample_training_patches(displacement: DisplacementMap, seed: int, count: int,
                            config: SamplerConfig = SamplerConfig()) -> List[Tuple[int, int]]:
    """Importance-sample patch origins around high displacement gradients.

    Each pick is the argmax of the gradient-magnitude saliency (ties broken
    at random from ``seed``); the saliency is then damped by
    ``1 - gain * exp(-d^2 / (2 sigma^2))`` around the pick.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    vals = np.where(displacement.mask, displacement.values, 0.0)
    H, W = vals.shape
    s = config.patch_size
    if H < s or W < s:
        raise ValueError("map smaller than the patch size")
    gy, gx = np.gradient(vals)
    sal = np.hypot(gx, gy)
    sal[~displacement.mask] = 0.0
    rng = np.random.default_rng(seed)
    radius = int(np.ceil(4 * config.sigma))
    origins = []
    for _ in range(count):
        top = sal.max()
        cand = np.flatnonzero(sal == top)
        pick = int(cand[rng.integers(len(cand))]) if len(cand) > 1 else int(cand[0])
        pi, pj = divmod(pick, W)
        origins.append((int(np.clip(pi - s // 2, 0, H - s)), int(np.clip(pj - s // 2, 0, W - s))))
        i0, i1 = max(pi - radius, 0), min(pi + radius + 1, H)
        j0, j1 = max(pj - radius, 0), min(pj + radius + 1, W)
        ii, jj = np.mgrid[i0:i1, j0:j1]
        d2 = (ii - pi) ** 2 + (jj - pj) ** 2
        sal[i0:i1, j0:j1] *= 1.0 - config.gain * np.exp(-d2 / (2 * config.sigma ** 2))
    return origins
