"""Glue between image space and texture space, and the end-to-end stages the
command line runs."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .displacement_pca import DisplacementPCA, SfSConfig, fit_displacement_sfs
from .illumination import (AlbedoMap, SHLighting, appearance_loss, estimate_lighting_albedo, render)
from .model_core import AffineCamera, MorphableModel, ProxyParams, synthesize_albedo, synthesize_vertices
from .texture_geom import (DisplacementMap, GeometryMaps, PatchGrid, apply_displacement, bilinear,
                           compute_normals, detect_orientation, rasterize_maps, rasterize_uv,
                           sample_at_uv, vertex_normals)

log = logging.getLogger(__name__)


def view_direction(camera: AffineCamera) -> np.ndarray:
    """Unit vector toward the viewer: the cross product of the camera's rows.

    With image y pointing down this is the side a right-handed, y-down object
    frame shows to the camera.
    """
    d = np.cross(camera.matrix[0, :3], camera.matrix[1, :3])
    return d / np.linalg.norm(d)


def unfold_image(image: np.ndarray, maps: GeometryMaps, camera: AffineCamera
                 ) -> Tuple[np.ndarray, np.ndarray]:
    """Sample the photo at each texel's projection.

    Returns the texture and a visibility mask (front-facing texels projecting
    inside the image).  Self-occlusion is not handled.
    """
    img = np.asarray(image, dtype=float)
    h, w = img.shape[:2]
    xy = camera.project(maps.position.reshape(-1, 3)).reshape(maps.shape + (2,))
    x, y = xy[..., 0] - 0.5, xy[..., 1] - 0.5  # pixel centers at integer + 0.5
    facing = maps.normal @ view_direction(camera) > 0
    inside = (x >= 0) & (x <= w - 1) & (y >= 0) & (y <= h - 1)
    visible = maps.mask & facing & inside
    tex = np.zeros(maps.shape + img.shape[2:])
    tex[visible] = bilinear(img, x[visible], y[visible])
    return tex, visible


def render_image(vertices: np.ndarray, faces: np.ndarray, uvs: np.ndarray, camera: AffineCamera,
                 texture: np.ndarray, size: Tuple[int, int]) -> Tuple[np.ndarray, np.ndarray]:
    """Z-buffered image-space render of a textured mesh under an affine camera."""
    H, W = size
    verts = np.asarray(vertices, dtype=float).reshape(-1, 3)
    xy = camera.project(verts) - 0.5
    depth = verts @ view_direction(camera)
    zbuf = np.full((H, W), -np.inf)
    uv_img = np.zeros((H, W, 2))
    for a, b, c in faces:
        p0, p1, p2 = xy[a], xy[b], xy[c]
        area = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1])
        if abs(area) < 1e-12:
            continue
        lo = np.maximum(np.ceil(np.minimum(np.minimum(p0, p1), p2)), 0).astype(int)
        hi = np.minimum(np.floor(np.maximum(np.maximum(p0, p1), p2)), [W - 1, H - 1]).astype(int)
        if lo[0] > hi[0] or lo[1] > hi[1]:
            continue
        jj, ii = np.meshgrid(np.arange(lo[0], hi[0] + 1), np.arange(lo[1], hi[1] + 1))
        w0 = ((p1[0] - jj) * (p2[1] - ii) - (p2[0] - jj) * (p1[1] - ii)) / area
        w1 = ((p2[0] - jj) * (p0[1] - ii) - (p0[0] - jj) * (p2[1] - ii)) / area
        w2 = 1.0 - w0 - w1
        inside = (w0 >= -1e-9) & (w1 >= -1e-9) & (w2 >= -1e-9)
        z = w0 * depth[a] + w1 * depth[b] + w2 * depth[c]
        closer = inside & (z > zbuf[ii, jj])
        if not closer.any():
            continue
        ri, rj = ii[closer], jj[closer]
        zbuf[ri, rj] = z[closer]
        uv_img[ri, rj] = (w0[closer, None] * uvs[a] + w1[closer, None] * uvs[b]
                          + w2[closer, None] * uvs[c])
    covered = np.isfinite(zbuf)
    img = np.zeros((H, W) + texture.shape[2:])
    img[covered] = sample_at_uv(texture, uv_img[covered])
    return img, covered


def albedo_map(model: MorphableModel, params: ProxyParams, maps: GeometryMaps) -> AlbedoMap:
    """Model albedo rasterized into texture space."""
    raster = rasterize_uv(model.faces, model.uv_coords, maps.resolution)
    values = raster.interpolate(model.faces, synthesize_albedo(model, params).reshape(-1, 3))
    values[~maps.mask] = 0.0
    return AlbedoMap(np.maximum(values, 1e-3) * maps.mask[..., None], maps.mask.copy())


def estimate_at_vertices(model: MorphableModel, params: ProxyParams, camera: AffineCamera,
                         image: np.ndarray, maps: GeometryMaps, iterations: int = 3
                         ) -> Tuple[SHLighting, AlbedoMap]:
    """Lighting and albedo from the photo sampled at the proxy vertices.

    The vertex albedo is interpolated over the atlas, so it only carries
    variation at the mesh's resolution; shading detail finer than that is
    left for the displacement fit.  Vertices that are back-facing or project
    outside the image keep the model albedo.
    """
    img = np.asarray(image, dtype=float)
    h, w = img.shape[:2]
    verts = synthesize_vertices(model, params).reshape(-1, 3)
    normals = vertex_normals(verts, model.faces)
    xy = camera.project(verts) - 0.5
    inside = (xy[:, 0] >= 0) & (xy[:, 0] <= w - 1) & (xy[:, 1] >= 0) & (xy[:, 1] <= h - 1)
    visible = inside & (normals @ view_direction(camera) > 0)
    colors = np.zeros((len(verts),) + img.shape[2:])
    colors[visible] = bilinear(img, xy[visible, 0], xy[visible, 1])
    init = np.maximum(synthesize_albedo(model, params).reshape(-1, 3), 1e-3)
    vmaps = GeometryMaps(verts[:, None], normals[:, None], visible[:, None])
    lighting, est = estimate_lighting_albedo(colors[:, None], vmaps, AlbedoMap(init[:, None], visible[:, None]),
                                             iterations)
    per_vertex = np.where(visible[:, None], est.values[:, 0], init)
    raster = rasterize_uv(model.faces, model.uv_coords, maps.resolution)
    values = raster.interpolate(model.faces, per_vertex) * maps.mask[..., None]
    return lighting, AlbedoMap(np.maximum(values, 0.0), maps.mask.copy())


def displace_vertices(model: MorphableModel, params: ProxyParams, disp: DisplacementMap) -> np.ndarray:
    """Proxy vertices pushed along their normals by the displacement at their UVs."""
    verts = synthesize_vertices(model, params).reshape(-1, 3)
    normals = vertex_normals(verts, model.faces)
    d = sample_at_uv(np.where(disp.mask, disp.values, 0.0), model.uv_coords)
    return verts + d[:, None] * normals


@dataclass
class SynthesisResult:
    maps: GeometryMaps
    texture: np.ndarray
    lighting: SHLighting
    albedo: AlbedoMap
    displacement: DisplacementMap
    fine_vertices: np.ndarray
    rerender: np.ndarray
    baseline_loss: float
    final_loss: float
    orientation: float
    patch_losses: List[Dict] = field(default_factory=list)


def synthesize(model: MorphableModel, params: ProxyParams, camera: AffineCamera, image: np.ndarray,
               pca: DisplacementPCA | Dict[int, DisplacementPCA], resolution: int, grid: PatchGrid,
               sfs: SfSConfig = SfSConfig(), lighting_iterations: int = 3, color_space: str = "rgb",
               region_labels: Optional[np.ndarray] = None) -> SynthesisResult:
    """Rasterize, unfold, estimate lighting/albedo, fit displacement, re-render.

    ``baseline_loss`` is the appearance loss of the bare proxy (zero
    displacement) and ``final_loss`` that of the fitted displacement.
    """
    maps = rasterize_maps(model, params, resolution)
    orientation = detect_orientation(maps)
    texture, visible = unfold_image(image, maps, camera)
    vis_maps = GeometryMaps(maps.position * visible[..., None], maps.normal * visible[..., None], visible)
    lighting, albedo = estimate_at_vertices(model, params, camera, image, vis_maps, lighting_iterations)

    zero = DisplacementMap(np.zeros(maps.shape), visible)
    baseline = appearance_loss(texture, albedo, lighting, vis_maps, zero, color_space, orientation)
    fits: list = []
    disp = fit_displacement_sfs(texture, albedo, lighting, vis_maps, pca, grid, sfs, orientation,
                                region_labels, fits)
    disp.values[~visible] = 0.0
    disp = DisplacementMap(disp.values, disp.mask & visible)
    final = appearance_loss(texture, albedo, lighting, vis_maps, disp, color_space, orientation)

    fine_pos = apply_displacement(vis_maps, disp)
    fine_n, valid = compute_normals(fine_pos, visible, orientation)
    rerender = render(albedo.values, fine_n, lighting, valid)
    summary = [{"origin": [int(r), int(c)], "initial": f.losses[0] if f.losses else None,
                "final": f.losses[-1] if f.losses else None, "iterations": max(len(f.losses) - 1, 0)}
               for (r, c), f in fits]
    return SynthesisResult(maps, texture, lighting, albedo, disp, displace_vertices(model, params, disp),
                           rerender, baseline, final, orientation, summary)
