"""Synthetic scenes with known ground truth, used by the demo command and tests."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from .displacement_pca import DisplacementPCA, build_pca, pca_combine
from .expression_prior import SemanticDictionary, downsampled_pixels, from_arrays, sample_expressions
from .illumination import SHLighting, render
from .model_core import (AffineCamera, MorphableModel, ProxyParams, generate_synthetic_model,
                         synthesize_albedo, synthesize_vertices)
from .pipeline import render_image
from .texture_geom import (DisplacementMap, GeometryMaps, PatchGrid, apply_displacement, blend_patches,
                           compute_normals, detect_orientation, rasterize_maps, rasterize_uv)

DEMO_LIGHTING = np.array([[2.5, 0.6, 1.0, 0.5, 0.1, 0.05, 0.2, 0.1, 0.05]]) * np.array([[1.0], [0.9], [0.8]])


def cosine_modes(size: int, count: int = 64) -> np.ndarray:
    """The ``count`` lowest-frequency non-constant 2D cosine patches, (count, size, size)."""
    kmax = int(np.ceil(np.sqrt(count))) + 2
    pairs = sorted(((kx, ky) for kx in range(kmax) for ky in range(kmax) if (kx, ky) != (0, 0)),
                   key=lambda k: (k[0] ** 2 + k[1] ** 2, k))[:count]
    x = (np.arange(size) + 0.5) / size
    return np.stack([np.outer(np.cos(np.pi * ky * x), np.cos(np.pi * kx * x)) for kx, ky in pairs])


def cosine_corpus(seed: int, size: int, count: int = 200, modes: int = 64, amplitude: float = 0.05
                  ) -> np.ndarray:
    """Training patches spanned by ``modes`` cosine patches with decaying random weights."""
    rng = np.random.default_rng(seed)
    decay = amplitude / np.sqrt(1.0 + np.arange(modes))
    return np.einsum("nk,kij->nij", rng.standard_normal((count, modes)) * decay, cosine_modes(size, modes))


def plane_maps(size: int, spacing: float = 0.1) -> GeometryMaps:
    """Flat proxy facing +z with texel pitch ``spacing`` mm."""
    ii, jj = np.mgrid[0:size, 0:size].astype(float)
    position = np.stack([jj * spacing, ii * spacing, np.zeros((size, size))], -1)
    normal = np.zeros((size, size, 3))
    normal[..., 2] = 1.0
    return GeometryMaps(position, normal, np.ones((size, size), bool))


def random_camera(rng: np.random.Generator, image_size: int, radius: float) -> AffineCamera:
    """Scaled orthographic view with a small random rotation, face centered in the frame."""
    ax, ay, az = rng.uniform(-0.15, 0.15, 3)
    rx = np.array([[1, 0, 0], [0, np.cos(ax), -np.sin(ax)], [0, np.sin(ax), np.cos(ax)]])
    ry = np.array([[np.cos(ay), 0, np.sin(ay)], [0, 1, 0], [-np.sin(ay), 0, np.cos(ay)]])
    rz = np.array([[np.cos(az), -np.sin(az), 0], [np.sin(az), np.cos(az), 0], [0, 0, 1]])
    scale = 0.55 * image_size / radius
    rows = scale * (rz @ ry @ rx)[:2]
    center = image_size / 2.0 + rng.uniform(-2.0, 2.0, 2)
    return AffineCamera(np.hstack([rows, center[:, None]]))


@dataclass
class DemoScene:
    model: MorphableModel
    params: ProxyParams
    camera: AffineCamera
    lighting: SHLighting
    pca: DisplacementPCA
    displacement: DisplacementMap    # ground truth in texture space
    image: np.ndarray                # photo, (H, W, 3) in [0, 1]
    landmarks: np.ndarray            # (68, 2) pixels
    dictionary: SemanticDictionary
    features: np.ndarray
    resolution: int
    patch_size: int


def _photo(model: MorphableModel, params: ProxyParams, camera: AffineCamera, lighting: SHLighting,
           disp: DisplacementMap | None, resolution: int, image_size: int,
           background: float = 0.15) -> np.ndarray:
    maps = rasterize_maps(model, params, resolution)
    if disp is None:
        disp = DisplacementMap.zeros_like(maps)
    orientation = detect_orientation(maps)
    normals, valid = compute_normals(apply_displacement(maps, disp), maps.mask, orientation)
    raster = rasterize_uv(model.faces, model.uv_coords, resolution)
    albedo = raster.interpolate(model.faces, synthesize_albedo(model, params).reshape(-1, 3))
    texture = np.clip(render(albedo, normals, lighting, valid), 0.0, 1.0)
    img, covered = render_image(synthesize_vertices(model, params), model.faces, model.uv_coords,
                                camera, texture, (image_size, image_size))
    img[~covered] = background
    return img


def make_demo_scene(seed: int = 0, resolution: int = 256, image_size: int = 256, patch_size: int = 64,
                    rank: int = 16, n_vertices: int = 1024, amplitude: float = 0.4,
                    dictionary_size: int = 24) -> DemoScene:
    """A face with random identity, expression, wrinkle displacement, camera and lighting.

    The displacement is a blend of PCA patches with random coefficients, so
    it is representable by the shipped PCA model up to blending.  The
    dictionary holds thumbnail features of renders at random expressions,
    one of which is the scene's own expression.
    """
    rng = np.random.default_rng(seed)
    model = generate_synthetic_model(seed, n_vertices=n_vertices)
    betas = sample_expressions(seed + 1, dictionary_size, model.n_expression, bound=2.0) * 0.5
    true_entry = int(rng.integers(dictionary_size))
    params = ProxyParams(0.5 * rng.standard_normal(model.n_shape), betas[true_entry],
                         0.5 * rng.standard_normal(model.n_albedo))
    camera = random_camera(rng, image_size, 90.0)
    lighting = SHLighting(DEMO_LIGHTING * (1.0 + 0.05 * rng.standard_normal((3, 1))))

    pca = build_pca(cosine_corpus(seed + 2, patch_size, count=4 * rank, modes=rank, amplitude=amplitude),
                    rank)
    grid = PatchGrid(patch_size, patch_size // 2)
    maps = rasterize_maps(model, params, resolution)
    origins = grid.origins(maps.shape)
    scale = pca.singular_values / np.sqrt(4 * rank)
    patches: List[np.ndarray] = [pca_combine(pca, rng.standard_normal(rank) * scale) for _ in origins]
    disp = blend_patches(patches, origins, maps.shape, maps.mask)
    disp.values[~maps.mask] = 0.0

    image = _photo(model, params, camera, lighting, disp, resolution, image_size)
    verts = synthesize_vertices(model, params).reshape(-1, 3)
    landmarks = camera.project(verts[model.landmark_vertices])

    feats = []
    for k, beta in enumerate(betas):
        p = ProxyParams(params.alpha, beta, params.gamma)
        feats.append(downsampled_pixels(image if k == true_entry else
                                        _photo(model, p, camera, lighting, None, resolution // 2, image_size)))
    dictionary = from_arrays(np.array(feats), betas)
    return DemoScene(model, params, camera, lighting, pca, disp, image, landmarks, dictionary,
                     downsampled_pixels(image), resolution, patch_size)


