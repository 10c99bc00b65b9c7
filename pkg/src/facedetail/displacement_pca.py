"""PCA patch model for displacement, the training losses, and a shape-from-shading
fit of PCA coefficients that stands in for network inference.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .container import read_container, write_container
from .illumination import AlbedoMap, SHLighting, appearance_loss, appearance_loss_grad
from .texture_geom import DisplacementMap, GeometryMaps, PatchGrid, blend_patches

log = logging.getLogger(__name__)

DEFAULT_RANK = 64


@dataclass(frozen=True, eq=False)
class DisplacementPCA:
    mean_patch: np.ndarray       # (P, P)
    basis: np.ndarray            # (rank, P, P), orthonormal when flattened
    singular_values: np.ndarray  # (rank,), non-increasing

    def __post_init__(self):
        if self.mean_patch.ndim != 2 or self.mean_patch.shape[0] != self.mean_patch.shape[1]:
            raise ValueError("mean patch must be square")
        if self.basis.ndim != 3 or self.basis.shape[1:] != self.mean_patch.shape:
            raise ValueError("basis patches must match the mean patch")
        if self.singular_values.shape != (self.basis.shape[0],):
            raise ValueError("one singular value per basis patch")
        for a in (self.mean_patch, self.basis, self.singular_values):
            a.setflags(write=False)

    @property
    def rank(self) -> int:
        return self.basis.shape[0]

    @property
    def patch_size(self) -> int:
        return self.mean_patch.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        """Basis as a (P*P, rank) matrix."""
        return self.basis.reshape(self.rank, self.patch_size ** 2).T

    @classmethod
    def zero(cls, patch_size: int = 256) -> "DisplacementPCA":
        """Rank-0 model whose only output is the zero patch."""
        return cls(np.zeros((patch_size, patch_size)), np.zeros((0, patch_size, patch_size)), np.zeros(0))


@dataclass
class LossConfig:
    lambda_gan_l1: float = 100.0
    eta: float = 0.5

    def __post_init__(self):
        if self.lambda_gan_l1 < 0 or self.eta < 0:
            raise ValueError("loss weights must be nonnegative")


def build_pca(training_patches: Sequence[np.ndarray] | np.ndarray, rank: int = DEFAULT_RANK) -> DisplacementPCA:
    """Mean patch plus the top ``rank`` principal directions of the centered patches.

    Each basis vector is signed so that its largest-magnitude entry is positive.
    """
    X = np.asarray(training_patches, dtype=float)
    if X.ndim != 3 or X.shape[1] != X.shape[2]:
        raise ValueError("training patches must be an (N, P, P) stack")
    n, p, _ = X.shape
    if n < rank + 1:
        raise ValueError(f"need at least rank + 1 = {rank + 1} patches, got {n}")
    flat = X.reshape(n, -1)
    mean = flat.mean(axis=0)
    _, s, vt = np.linalg.svd(flat - mean, full_matrices=False)
    basis = vt[:rank]
    peak = np.argmax(np.abs(basis), axis=1)
    basis = basis * np.sign(basis[np.arange(rank), peak])[:, None]
    return DisplacementPCA(mean.reshape(p, p), basis.reshape(rank, p, p), s[:rank].copy())


def pca_project(model: DisplacementPCA, patch: np.ndarray) -> np.ndarray:
    patch = np.asarray(patch, dtype=float)
    if patch.shape != model.mean_patch.shape:
        raise ValueError(f"patch shape {patch.shape} != model patch {model.mean_patch.shape}")
    return model.matrix.T @ (patch - model.mean_patch).ravel()


def pca_combine(model: DisplacementPCA, coefficients: np.ndarray) -> np.ndarray:
    c = np.asarray(coefficients, dtype=float).ravel()
    if c.size != model.rank:
        raise ValueError(f"expected {model.rank} coefficients, got {c.size}")
    if not np.all(np.isfinite(c)):
        raise ValueError("coefficients must be finite")
    return model.mean_patch + (model.matrix @ c).reshape(model.mean_patch.shape)


def geometry_loss(pred_coeffs: np.ndarray, refined_patch: np.ndarray, truth_patch: np.ndarray,
                  model: DisplacementPCA) -> float:
    """Per-texel mean L1 of the PCA reconstruction plus that of the refined patch."""
    refined = np.asarray(refined_patch, dtype=float)
    truth = np.asarray(truth_patch, dtype=float)
    if refined.shape != truth.shape or truth.shape != model.mean_patch.shape:
        raise ValueError("patch shapes disagree")
    coarse = pca_combine(model, pred_coeffs)
    return float(np.mean(np.abs(coarse - truth)) + np.mean(np.abs(refined - truth)))


def total_loss(geometry_term: float, reconstruction_term: float, config: LossConfig = LossConfig()) -> float:
    """lambda * (scans + eta * recon); the adversarial term is not modelled and counts as 0."""
    if geometry_term < 0 or reconstruction_term < 0:
        raise ValueError("loss terms must be nonnegative")
    return config.lambda_gan_l1 * (geometry_term + config.eta * reconstruction_term)


# -- shape from shading ------------------------------------------------------

@dataclass
class SfSConfig:
    max_iterations: int = 200
    rel_tol: float = 1e-6
    armijo_c: float = 1e-4
    shrink: float = 0.5
    grow: float = 2.0
    initial_step: float = 1.0   # length of the first trial step in coefficient space
    min_step: float = 1e-12
    min_valid_texels: int = 16
    precondition: str = "slope"  # "slope" or "none"


@dataclass
class PatchFit:
    coeffs: np.ndarray
    losses: List[float] = field(default_factory=list)
    converged: bool = False


def slope_energy(model: DisplacementPCA) -> np.ndarray:
    """Per-basis sum of squared central differences (the basis' effect on normals)."""
    if model.rank == 0:
        return np.zeros(0)
    b = model.basis
    du = np.gradient(b, axis=2)
    dv = np.gradient(b, axis=1)
    return np.sum(du * du + dv * dv, axis=(1, 2))


def _metric(model: DisplacementPCA, kind: str) -> np.ndarray:
    if kind == "none":
        return np.ones(model.rank)
    if kind != "slope":
        raise ValueError(f"unknown preconditioner {kind!r}")
    e = slope_energy(model)
    floor = 1e-6 * e.max() if e.size and e.max() > 0 else 1.0
    return np.maximum(e, floor)


def fit_patch_sfs(image: np.ndarray, albedo: AlbedoMap, lighting: SHLighting, maps: GeometryMaps,
                  model: DisplacementPCA, config: SfSConfig = SfSConfig(),
                  orientation: float = 1.0) -> PatchFit:
    """Descent with Armijo backtracking on one patch's appearance loss.

    The search direction is the gradient scaled by the inverse slope energy
    of each basis patch (``precondition="slope"``), or the plain gradient.
    """
    c = np.zeros(model.rank)
    if model.rank == 0 or int(maps.mask.sum()) < config.min_valid_texels:
        return PatchFit(c, [], True)
    B = model.matrix
    metric = _metric(model, config.precondition)

    def disp(coeffs):
        return DisplacementMap(pca_combine(model, coeffs), maps.mask)

    def loss_and_grad(coeffs):
        g_map, loss = appearance_loss_grad(image, albedo, lighting, maps, disp(coeffs),
                                           orientation=orientation, return_loss=True)
        return loss, B.T @ g_map.ravel()

    try:
        loss, grad = loss_and_grad(c)
    except ValueError:
        return PatchFit(c, [], True)
    if not np.isfinite(loss):
        log.warning("non-finite initial loss; keeping zero coefficients")
        return PatchFit(c, [], False)
    fit = PatchFit(c, [loss])
    direction = grad / metric
    dnorm = np.linalg.norm(direction)
    step = config.initial_step / dnorm if dnorm > 0 else 0.0
    for _ in range(config.max_iterations):
        direction = grad / metric
        decrease = grad @ direction
        if decrease <= 0:
            fit.converged = True
            break
        accepted = False
        dnorm = np.sqrt(direction @ direction)
        while step * dnorm > config.min_step:
            trial = c - step * direction
            t_loss = appearance_loss(image, albedo, lighting, maps, disp(trial), orientation=orientation)
            if not np.isfinite(t_loss):
                log.warning("non-finite loss during line search; falling back to zero coefficients")
                return PatchFit(np.zeros(model.rank), fit.losses, False)
            if t_loss <= loss - config.armijo_c * step * decrease:
                accepted = True
                break
            step *= config.shrink
        if not accepted:
            fit.converged = True
            break
        rel = (loss - t_loss) / max(abs(loss), 1e-300)
        c = trial
        loss, grad = loss_and_grad(c)
        fit.losses.append(loss)
        step *= config.grow
        if rel < config.rel_tol:
            fit.converged = True
            break
    fit.coeffs = c
    return fit


def _patch_region(labels: np.ndarray, row: int, col: int, size: int) -> int:
    vals, counts = np.unique(labels[row:row + size, col:col + size], return_counts=True)
    return int(vals[np.argmax(counts)])


def fit_displacement_sfs(input_image: np.ndarray, albedo: AlbedoMap, lighting: SHLighting,
                         proxy_maps: GeometryMaps, model: DisplacementPCA | Dict[int, DisplacementPCA],
                         grid: PatchGrid = PatchGrid(), config: SfSConfig = SfSConfig(),
                         orientation: float = 1.0, region_labels: Optional[np.ndarray] = None,
                         fits: Optional[list] = None) -> DisplacementMap:
    """Per-patch shape-from-shading over PCA coefficients, blended into one map.

    ``model`` may be a dict of per-region models keyed by label; each patch
    then uses the model of its majority label in ``region_labels`` (falling
    back to key 0).
    """
    models = model if isinstance(model, dict) else {0: model}
    for m in models.values():
        if m.patch_size != grid.patch_size:
            raise ValueError(f"PCA patch size {m.patch_size} != grid patch size {grid.patch_size}")
    img = np.asarray(input_image, dtype=float)
    patches, origins = [], []
    s = grid.patch_size
    for r, c in grid.origins(proxy_maps.shape):
        key = 0 if region_labels is None else _patch_region(region_labels, r, c, s)
        m = models.get(key, models.get(0))
        if m is None:
            raise KeyError(f"no PCA model for region {key} and no default model")
        sub_maps = proxy_maps.crop(r, c, s)
        sub_albedo = AlbedoMap(albedo.values[r:r + s, c:c + s], albedo.mask[r:r + s, c:c + s])
        fit = fit_patch_sfs(img[r:r + s, c:c + s], sub_albedo, lighting, sub_maps, m, config, orientation)
        if fits is not None:
            fits.append(((r, c), fit))
        patches.append(pca_combine(m, fit.coeffs))
        origins.append((r, c))
    out = blend_patches(patches, origins, proxy_maps.shape, proxy_maps.mask)
    out.values[~proxy_maps.mask] = 0.0
    return out


# -- file I/O ----------------------------------------------------------------

def save_pca(model: DisplacementPCA, path: str | os.PathLike) -> None:
    write_container(path, "displacement_pca",
                    {"mean_patch": model.mean_patch, "basis": model.basis,
                     "singular_values": model.singular_values},
                    attrs={"schema": "1", "rank": str(model.rank), "patch_size": str(model.patch_size)})


def load_pca(path: str | os.PathLike) -> DisplacementPCA:
    kind, attrs, arrays = read_container(path)
    if kind != "displacement_pca":
        raise ValueError(f"{path}: expected a displacement_pca container, got {kind}")
    basis = arrays["basis"]
    if basis.ndim != 3:  # a rank-0 model stores an empty (0, P, P) array
        p = int(attrs["patch_size"])
        basis = basis.reshape(-1, p, p)
    return DisplacementPCA(arrays["mean_patch"], basis, arrays["singular_values"].reshape(-1))
