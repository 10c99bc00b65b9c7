"""Second-order spherical-harmonics Lambertian shading in texture space.

Rendering is ``I = albedo * (coeffs . Y(N))`` per channel.  Shading is left
unclamped so the appearance loss stays smooth; clamp only for display.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .texture_geom import (DisplacementMap, GeometryMaps, apply_displacement, normals_backward,
                           normals_with_trace)

log = logging.getLogger(__name__)

C0 = 0.5 * np.sqrt(1.0 / np.pi)         # 0.282095
C1 = np.sqrt(3.0 / (4.0 * np.pi))       # 0.488603
C2 = 0.5 * np.sqrt(15.0 / np.pi)        # 1.092548
C3 = 0.25 * np.sqrt(5.0 / np.pi)        # 0.315392
C4 = 0.25 * np.sqrt(15.0 / np.pi)       # 0.546274

SHADING_EPS = 1e-3


class LightingError(ValueError):
    pass


@dataclass
class SHLighting:
    coeffs: np.ndarray  # (channels, 9)

    def __post_init__(self):
        self.coeffs = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        if self.coeffs.shape[1] != 9 or self.coeffs.shape[0] not in (1, 3):
            raise ValueError("lighting needs 9 coefficients for 1 or 3 channels")
        if not np.all(np.isfinite(self.coeffs)):
            raise ValueError("lighting coefficients must be finite")

    @classmethod
    def ambient(cls, channels: int = 3) -> "SHLighting":
        """DC-only lighting that shades every normal with 1."""
        c = np.zeros((channels, 9))
        c[:, 0] = 1.0 / C0
        return cls(c)


@dataclass
class AlbedoMap:
    values: np.ndarray  # (H, W, C)
    mask: np.ndarray


def sh_basis_map(normals: np.ndarray) -> np.ndarray:
    """Real SH basis [Y00, Y1-1, Y10, Y11, Y2-2, Y2-1, Y20, Y21, Y22] for (..., 3) normals."""
    x, y, z = normals[..., 0], normals[..., 1], normals[..., 2]
    return np.stack([np.full_like(x, C0), C1 * y, C1 * z, C1 * x, C2 * x * y, C2 * y * z,
                     C3 * (3 * z * z - 1), C2 * x * z, C4 * (x * x - y * y)], axis=-1)


def sh_basis_grad(normals: np.ndarray) -> np.ndarray:
    """d Y_k / d n_a as a (..., 9, 3) array."""
    x, y, z = normals[..., 0], normals[..., 1], normals[..., 2]
    zero = np.zeros_like(x)
    one = np.ones_like(x)
    rows = [
        (zero, zero, zero),
        (zero, C1 * one, zero),
        (zero, zero, C1 * one),
        (C1 * one, zero, zero),
        (C2 * y, C2 * x, zero),
        (zero, C2 * z, C2 * y),
        (zero, zero, 6 * C3 * z),
        (C2 * z, zero, C2 * x),
        (2 * C4 * x, -2 * C4 * y, zero),
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def sh_basis(normal: np.ndarray) -> np.ndarray:
    """Nine real SH basis values for one unit normal."""
    n = np.asarray(normal, dtype=float).reshape(3)
    if abs(np.linalg.norm(n) - 1.0) > 1e-6:
        raise ValueError(f"normal must be unit length, got |n| = {np.linalg.norm(n):.9g}")
    return sh_basis_map(n)


def _coeffs_for(lighting: SHLighting, channels: int) -> np.ndarray:
    c = lighting.coeffs
    if c.shape[0] == channels:
        return c
    if c.shape[0] == 1:
        return np.repeat(c, channels, axis=0)
    raise ValueError(f"lighting has {c.shape[0]} channels, image has {channels}")


def shading(normals: np.ndarray, lighting: SHLighting, channels: int = 3) -> np.ndarray:
    return sh_basis_map(normals) @ _coeffs_for(lighting, channels).T


def render(albedo: AlbedoMap | np.ndarray, normals: np.ndarray, lighting: SHLighting,
           mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Lambertian SH render; zero outside ``mask`` (the albedo mask by default)."""
    if isinstance(albedo, AlbedoMap):
        mask = albedo.mask if mask is None else mask
        albedo = albedo.values
    albedo = np.asarray(albedo, dtype=float)
    if albedo.ndim == 2:
        albedo = albedo[..., None]
    if albedo.shape[:2] != normals.shape[:2]:
        raise ValueError(f"albedo {albedo.shape[:2]} and normals {normals.shape[:2]} differ")
    img = albedo * shading(normals, lighting, albedo.shape[2])
    if mask is not None:
        img = np.where(np.asarray(mask, dtype=bool)[..., None], img, 0.0)
    return img


# -- colour ------------------------------------------------------------------

def rgb_to_hsv(image: np.ndarray, warn: bool = True) -> np.ndarray:
    """Hexcone RGB -> HSV with hue in [0, 1); gray maps to hue 0."""
    rgb = np.asarray(image, dtype=float)
    if warn and (rgb.min(initial=0.0) < 0.0 or rgb.max(initial=0.0) > 1.0):
        log.warning("rgb_to_hsv: clamping values outside [0, 1]")
    rgb = np.clip(rgb, 0.0, 1.0)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = rgb.max(axis=-1)
    delta = v - rgb.min(axis=-1)
    s = np.divide(delta, v, out=np.zeros_like(v), where=v > 0)
    safe = np.where(delta > 0, delta, 1.0)
    h = np.where(v == r, (g - b) / safe,
                 np.where(v == g, 2.0 + (b - r) / safe, 4.0 + (r - g) / safe))
    h = np.where(delta > 0, (h / 6.0) % 1.0, 0.0)
    return np.stack([h, s, v], axis=-1)


def hsv_to_rgb(image: np.ndarray) -> np.ndarray:
    hsv = np.asarray(image, dtype=float)
    h, s, v = hsv[..., 0] % 1.0, hsv[..., 1], hsv[..., 2]
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p = v * (1 - s)
    q = v * (1 - s * f)
    t = v * (1 - s * (1 - f))
    i = i.astype(int) % 6
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


# -- lighting / albedo estimation ---------------------------------------------

def lighting_objective(image: np.ndarray, normals: np.ndarray, mask: np.ndarray,
                       albedo: np.ndarray, lighting: SHLighting) -> float:
    r = image - render(albedo, normals, lighting, mask)
    return float(np.sum(r[mask] ** 2))


def _solve_channel(design: np.ndarray, target: np.ndarray, mean_basis: np.ndarray) -> np.ndarray:
    """Min-norm least squares for one channel, rescaled later to unit mean shading.

    Falls back to the equality-constrained problem (mean shading = 1) when the
    unconstrained solution has zero mean shading, e.g. for a black image.
    """
    coeffs, *_ = np.linalg.lstsq(design, target, rcond=None)
    if abs(mean_basis @ coeffs) > 1e-12 * max(np.linalg.norm(coeffs), 1e-300):
        return coeffs
    kkt = np.zeros((10, 10))
    kkt[:9, :9] = design.T @ design
    kkt[:9, 9] = mean_basis
    kkt[9, :9] = mean_basis
    rhs = np.concatenate([design.T @ target, [1.0]])
    sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    return sol[:9]


def estimate_lighting_albedo(image: np.ndarray, proxy_maps: GeometryMaps, albedo_init: AlbedoMap,
                             iterations: int = 3, shading_eps: float = SHADING_EPS
                             ) -> Tuple[SHLighting, AlbedoMap]:
    """Alternating least squares for SH lighting and per-texel albedo.

    Each sweep solves the per-channel 9-coefficient lighting with albedo
    fixed, rescales lighting so mean shading over the mask is one (albedo
    takes the inverse scale), then sets albedo = image / shading wherever
    ``|shading| > shading_eps``.
    """
    image = np.asarray(image, dtype=float)
    if image.ndim == 2:
        image = image[..., None]
    mask = proxy_maps.mask & albedo_init.mask
    if int(mask.sum()) < 9:
        raise LightingError(f"need at least 9 masked texels, have {int(mask.sum())}")
    normals = proxy_maps.normal[mask]
    if not np.any(np.linalg.norm(normals, axis=1) > 0):
        raise LightingError("all normals are zero; shading is identically zero")
    Y = sh_basis_map(normals)
    y_mean = Y.mean(axis=0)
    I = image[mask]
    a = np.array(albedo_init.values, dtype=float)
    if a.ndim == 2:
        a = a[..., None]
    a = np.broadcast_to(a, image.shape).copy()
    channels = image.shape[2]
    coeffs = np.zeros((channels, 9))
    for _ in range(max(int(iterations), 0)):
        am = a[mask]
        for ch in range(channels):
            L = _solve_channel(am[:, ch:ch + 1] * Y, I[:, ch], y_mean)
            scale = y_mean @ L
            coeffs[ch] = L / scale
            am[:, ch] *= scale
        s = Y @ coeffs.T
        ok = np.abs(s) > shading_eps
        am = np.where(ok, I / np.where(ok, s, 1.0), am)
        a[mask] = am
    a[~mask] = 0.0
    return SHLighting(coeffs), AlbedoMap(a, mask)


# -- appearance loss ------------------------------------------------------------

@dataclass
class _Forward:
    normals: np.ndarray
    valid: np.ndarray
    trace: object
    rendered: np.ndarray
    residual: np.ndarray
    count: int


def _forward(input_image, albedo, lighting, proxy_maps, disp, orientation) -> _Forward:
    a = albedo.values if isinstance(albedo, AlbedoMap) else np.asarray(albedo, dtype=float)
    if a.ndim == 2:
        a = a[..., None]
    img = np.asarray(input_image, dtype=float)
    if img.ndim == 2:
        img = img[..., None]
    if img.shape[:2] != proxy_maps.shape or a.shape[:2] != proxy_maps.shape:
        raise ValueError("image, albedo and maps must share a resolution")
    fine = apply_displacement(proxy_maps, disp)
    normals, valid, trace = normals_with_trace(fine, proxy_maps.mask, orientation)
    if isinstance(albedo, AlbedoMap):
        valid = valid & albedo.mask
    count = int(valid.sum()) * img.shape[2]
    if count == 0:
        raise ValueError("appearance loss over an empty mask")
    rendered = render(np.broadcast_to(a, img.shape), normals, lighting, valid)
    return _Forward(normals, valid, trace, rendered, img - rendered, count)


def appearance_loss(input_image: np.ndarray, albedo: AlbedoMap | np.ndarray, lighting: SHLighting,
                    proxy_maps: GeometryMaps, disp: DisplacementMap, color_space: str = "rgb",
                    orientation: float = 1.0) -> float:
    """Mean absolute difference between the input and the detailed re-render.

    The mean runs over valid texels and channels.  In ``"hsv"`` mode both
    images are converted before differencing.
    """
    fw = _forward(input_image, albedo, lighting, proxy_maps, disp, orientation)
    if color_space.lower() == "hsv":
        img = np.asarray(input_image, dtype=float)
        diff = rgb_to_hsv(img[fw.valid], warn=False) - rgb_to_hsv(fw.rendered[fw.valid], warn=False)
        return float(np.sum(np.abs(diff)) / fw.count)
    if color_space.lower() != "rgb":
        raise ValueError(f"unknown color space {color_space!r}")
    return float(np.sum(np.abs(fw.residual[fw.valid])) / fw.count)


def appearance_loss_grad(input_image: np.ndarray, albedo: AlbedoMap | np.ndarray, lighting: SHLighting,
                         proxy_maps: GeometryMaps, disp: DisplacementMap, color_space: str = "rgb",
                         orientation: float = 1.0, return_loss: bool = False):
    """Analytic d(appearance_loss)/d(displacement) as an (H, W) map (RGB only).

    Uses sign(0) = 0 for the L1 subgradient.
    """
    if color_space.lower() != "rgb":
        raise NotImplementedError("analytic gradients are only available in RGB")
    fw = _forward(input_image, albedo, lighting, proxy_maps, disp, orientation)
    a = albedo.values if isinstance(albedo, AlbedoMap) else np.asarray(albedo, dtype=float)
    if a.ndim == 2:
        a = a[..., None]
    a = np.broadcast_to(a, fw.residual.shape)
    channels = fw.residual.shape[2]

    g_img = np.where(fw.valid[..., None], -np.sign(fw.residual), 0.0) / fw.count
    g_shading = g_img * a                                       # (H, W, C)
    g_Y = g_shading @ _coeffs_for(lighting, channels)           # (H, W, 9)
    g_N = np.einsum("hwk,hwka->hwa", g_Y, sh_basis_grad(fw.normals))
    g_P = normals_backward(g_N, fw.valid, fw.trace)
    grad = np.sum(g_P * proxy_maps.normal, axis=2)
    grad[~proxy_maps.mask] = 0.0
    if return_loss:
        return grad, float(np.sum(np.abs(fw.residual[fw.valid])) / fw.count)
    return grad
