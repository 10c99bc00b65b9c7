"""Landmark-driven proxy fitting: alternating affine-camera and shape solves.

The landmark objective is minimized in squared form,

    E(alpha, P) = sum_k w_k ||L_k - P(l_k(alpha, beta))||^2 + lambda_s ||alpha||^2,

so each half-step is a linear least-squares problem.  Expression coefficients
are held at a prior throughout.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .model_core import (CONTOUR_LANDMARKS, AffineCamera, MorphableModel, ProxyParams,
                         synthesize_vertices)

log = logging.getLogger(__name__)

CONDITION_LIMIT = 1e10


class FitError(RuntimeError):
    pass


class TooFewPoints(FitError):
    pass


class CoplanarPoints(FitError):
    pass


class SingularSystem(FitError):
    pass


@dataclass
class LandmarkSet:
    points: np.ndarray   # (m, 2) pixels
    weights: np.ndarray  # (m,)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if self.weights.shape[0] != self.points.shape[0]:
            raise ValueError("one weight per landmark required")
        if np.any(self.weights < 0):
            raise ValueError("landmark weights must be nonnegative")

    @property
    def count(self) -> int:
        return self.points.shape[0]

    @classmethod
    def with_default_weights(cls, points: np.ndarray, contour_weight: float = 0.5,
                             contour: Sequence[int] = CONTOUR_LANDMARKS) -> "LandmarkSet":
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        weights = np.ones(len(points))
        weights[[i for i in contour if i < len(points)]] = contour_weight
        return cls(points, weights)


@dataclass
class FitConfig:
    lambda_s: float = 30.0
    max_iterations: int = 5
    convergence_tol: float = 1e-6

    def __post_init__(self):
        if self.lambda_s < 0:
            raise ValueError("lambda_s must be nonnegative")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.convergence_tol <= 0:
            raise ValueError("convergence_tol must be positive")


def _normalization_2d(points: np.ndarray, weights: np.ndarray) -> np.ndarray:
    w = weights / weights.sum()
    centroid = w @ points
    mean_dist = w @ np.linalg.norm(points - centroid, axis=1)
    s = np.sqrt(2.0) / mean_dist if mean_dist > 0 else 1.0
    return np.array([[s, 0, -s * centroid[0]], [0, s, -s * centroid[1]], [0, 0, 1.0]])


def _normalization_3d(points: np.ndarray, weights: np.ndarray) -> np.ndarray:
    w = weights / weights.sum()
    centroid = w @ points
    mean_dist = w @ np.linalg.norm(points - centroid, axis=1)
    s = np.sqrt(3.0) / mean_dist if mean_dist > 0 else 1.0
    U = np.eye(4) * s
    U[3, 3] = 1.0
    U[:3, 3] = -s * centroid
    return U


def fit_affine_camera(points3d: np.ndarray, points2d: np.ndarray,
                      weights: Optional[np.ndarray] = None) -> AffineCamera:
    """Weighted Gold Standard estimate of an affine camera.

    Both point sets are isotropically normalized (centroid to the origin, mean
    distance sqrt(2) resp. sqrt(3)); each row of the normalized camera is then
    the weighted linear least-squares solution, and the result is
    denormalized.
    """
    X = np.asarray(points3d, dtype=float).reshape(-1, 3)
    x = np.asarray(points2d, dtype=float).reshape(-1, 2)
    if X.shape[0] != x.shape[0]:
        raise ValueError("3D and 2D point counts differ")
    w = np.ones(len(X)) if weights is None else np.asarray(weights, dtype=float)
    active = w > 0
    if active.sum() < 4:
        raise TooFewPoints(f"need at least 4 weighted correspondences, got {int(active.sum())}")
    X, x, w = X[active], x[active], w[active]

    T = _normalization_2d(x, w)
    U = _normalization_3d(X, w)
    Xn = X @ U[:3, :3].T + U[:3, 3]
    xn = x @ T[:2, :2].T + T[:2, 2]

    A = np.hstack([Xn, np.ones((len(Xn), 1))])
    sw = np.sqrt(w)[:, None]
    Aw = A * sw
    cond = np.linalg.cond(Aw)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise CoplanarPoints(f"3D points are (nearly) coplanar: condition number {cond:.3g}")
    rows, *_ = np.linalg.lstsq(Aw, xn * sw, rcond=None)
    Pn = np.vstack([rows.T, [0, 0, 0, 1.0]])
    P = np.linalg.solve(T, Pn @ U)
    return AffineCamera(P[:2])


def _shape_system(model: MorphableModel, camera: AffineCamera, landmarks: LandmarkSet,
                  beta: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Design matrix A, target b and per-row weights for the alpha solve."""
    vids = model.landmark_vertices
    if len(vids) != landmarks.count:
        raise ValueError(f"model has {len(vids)} landmarks, landmark set has {landmarks.count}")
    rows = (3 * vids[:, None] + np.arange(3)).ravel()
    M = camera.matrix[:, :3]
    Es = model.basis_shape[rows].reshape(len(vids), 3, -1)
    A = np.einsum("ij,kjl->kil", M, Es).reshape(2 * len(vids), -1)
    fixed = (model.mean_shape[rows] + model.mean_expression[rows]
             + model.basis_expression[rows] @ beta).reshape(-1, 3)
    b = (landmarks.points - camera.project(fixed)).ravel()
    return A, b, np.repeat(landmarks.weights, 2)


def solve_shape(model: MorphableModel, camera: AffineCamera, landmarks: LandmarkSet,
                beta_fixed: np.ndarray, config: FitConfig) -> np.ndarray:
    """Tikhonov-regularized shape coefficients for a fixed camera and expression."""
    beta_fixed = np.asarray(beta_fixed, dtype=float)
    if beta_fixed.shape != (model.n_expression,):
        raise ValueError("beta length does not match the expression basis")
    A, b, w = _shape_system(model, camera, landmarks, beta_fixed)
    AtW = A.T * w
    lhs = AtW @ A + config.lambda_s * np.eye(A.shape[1])
    rhs = AtW @ b
    if not np.isfinite(np.linalg.cond(lhs)) or np.linalg.cond(lhs) > 1e14:
        raise SingularSystem("shape normal equations are singular; use lambda_s > 0")
    return cho_solve(cho_factor(lhs), rhs)


def landmark_objective(model: MorphableModel, camera: AffineCamera, landmarks: LandmarkSet,
                       alpha: np.ndarray, beta: np.ndarray, lambda_s: float) -> float:
    params = ProxyParams(alpha, beta, np.zeros(model.n_albedo))
    verts = synthesize_vertices(model, params).reshape(-1, 3)[model.landmark_vertices]
    r = landmarks.points - camera.project(verts)
    return float(landmarks.weights @ np.sum(r * r, axis=1) + lambda_s * alpha @ alpha)


def reprojection_rms(model: MorphableModel, camera: AffineCamera, landmarks: LandmarkSet,
                     params: ProxyParams) -> float:
    verts = synthesize_vertices(model, params).reshape(-1, 3)[model.landmark_vertices]
    r = landmarks.points - camera.project(verts)
    return float(np.sqrt(np.mean(np.sum(r * r, axis=1))))


def fit_proxy(model: MorphableModel, landmarks: LandmarkSet, beta_prior: np.ndarray,
              config: FitConfig = FitConfig()) -> Tuple[ProxyParams, AffineCamera, List[float]]:
    """Alternate camera and shape solves from alpha = 0 with beta held at the prior.

    Returns the fitted parameters (gamma left at zero), the camera and the
    value of the squared objective after each iteration.
    """
    beta = np.asarray(beta_prior, dtype=float)
    if beta.shape != (model.n_expression,):
        raise ValueError("beta_prior length does not match the expression basis")
    alpha = np.zeros(model.n_shape)
    residuals: List[float] = []
    camera = None
    for it in range(config.max_iterations):
        params = ProxyParams(alpha, beta, np.zeros(model.n_albedo))
        verts = synthesize_vertices(model, params).reshape(-1, 3)[model.landmark_vertices]
        camera = fit_affine_camera(verts, landmarks.points, landmarks.weights)
        new_alpha = solve_shape(model, camera, landmarks, beta, config)
        step = float(np.max(np.abs(new_alpha - alpha))) if alpha.size else 0.0
        alpha = new_alpha
        residuals.append(landmark_objective(model, camera, landmarks, alpha, beta, config.lambda_s))
        log.debug("proxy fit iteration %d: objective %.6g, max |dalpha| %.3g", it, residuals[-1], step)
        if step < config.convergence_tol:
            break
    return ProxyParams(alpha, beta, np.zeros(model.n_albedo)), camera, residuals
