"""Normal integration with a depth prior.

Minimizes, over masked texels,

    sum (z[i, j+1] - z[i, j] - pe[i, j])^2 + sum (z[i+1, j] - z[i, j] - qe[i, j])^2
        + mu * sum (z - z0)^2

using forward differences only where both texels are in the mask (free
boundary).  Gradients are given at texel centers; a forward difference
measures the slope at the edge midpoint, so the data term uses the edge
average ``pe[i, j] = (p[i, j] + p[i, j+1]) / 2`` (likewise for q).  The
normal equations are sparse SPD; each connected mask component is an
independent system.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import scipy.sparse as sp
from scipy.ndimage import label
from scipy.sparse.linalg import cg, spsolve

log = logging.getLogger(__name__)

MU_FINE = 1e-5
MU_SMOOTH = 1e-3


class IntegrationError(RuntimeError):
    pass


@dataclass
class GradientField:
    p: np.ndarray  # dz/du (along columns)
    q: np.ndarray  # dz/dv (along rows)
    mask: np.ndarray

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.p.shape != self.q.shape or self.p.shape != self.mask.shape:
            raise ValueError("p, q and mask must share a shape")
        if not (np.all(np.isfinite(self.p[self.mask])) and np.all(np.isfinite(self.q[self.mask]))):
            raise ValueError("gradients must be finite on the mask")


@dataclass
class IntegrationConfig:
    mu: float = MU_SMOOTH
    rtol: float = 1e-8
    direct_limit: int = 1_000_000

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")

    @classmethod
    def fine(cls) -> "IntegrationConfig":
        return cls(mu=MU_FINE)

    @classmethod
    def smooth(cls) -> "IntegrationConfig":
        return cls(mu=MU_SMOOTH)


def _difference_operator(index: np.ndarray, mask: np.ndarray, axis: int):
    """Sparse forward difference over mask-internal edges and the mask of edge starts."""
    if axis == 1:
        start = mask[:, :-1] & mask[:, 1:]
        a, b = index[:, :-1][start], index[:, 1:][start]
    else:
        start = mask[:-1, :] & mask[1:, :]
        a, b = index[:-1, :][start], index[1:, :][start]
    m = len(a)
    rows = np.repeat(np.arange(m), 2)
    cols = np.stack([a, b], 1).ravel()
    vals = np.tile([-1.0, 1.0], m)
    n = int(mask.sum())
    return sp.csr_matrix((vals, (rows, cols)), shape=(m, n)), start


def _edge_average(g: np.ndarray, axis: int) -> np.ndarray:
    if axis == 1:
        return 0.5 * (g[:, :-1] + g[:, 1:])
    return 0.5 * (g[:-1, :] + g[1:, :])


def build_system(field: GradientField, z0: np.ndarray, mu: float, mask: np.ndarray
                 ) -> Tuple[sp.csr_matrix, np.ndarray]:
    index = np.full(mask.shape, -1, dtype=np.int64)
    index[mask] = np.arange(int(mask.sum()))
    Du, eu = _difference_operator(index, mask, axis=1)
    Dv, ev = _difference_operator(index, mask, axis=0)
    n = int(mask.sum())
    A = (Du.T @ Du + Dv.T @ Dv + mu * sp.identity(n, format="csr")).tocsr()
    b = (Du.T @ _edge_average(field.p, 1)[eu] + Dv.T @ _edge_average(field.q, 0)[ev]
         + mu * z0[mask])
    return A, b


def _solve(A: sp.csr_matrix, b: np.ndarray, config: IntegrationConfig) -> np.ndarray:
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros_like(b)
    if A.shape[0] <= config.direct_limit:
        x = spsolve(A.tocsc(), b)
    else:
        d = A.diagonal()
        M = sp.diags(1.0 / d)
        x, info = cg(A, b, rtol=config.rtol * 0.1, atol=0.0, M=M, maxiter=20 * A.shape[0])
        if info != 0:
            raise IntegrationError(f"conjugate gradient did not converge (info={info})")
    res = np.linalg.norm(A @ x - b) / bnorm
    if res >= config.rtol:
        # One step of iterative refinement usually clears round-off from the direct solve.
        x = x + spsolve(A.tocsc(), b - A @ x)
        res = np.linalg.norm(A @ x - b) / bnorm
        if res >= config.rtol:
            raise IntegrationError(f"relative residual {res:.3g} above {config.rtol:g}")
    return x


def integrate(field: GradientField, z0: np.ndarray, config: IntegrationConfig = IntegrationConfig()
              ) -> np.ndarray:
    """Depth map minimizing the gradient misfit plus ``mu`` times the prior misfit.

    Disconnected mask components (4-connectivity) are solved independently.
    Texels outside the mask are set to zero.
    """
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != field.mask.shape:
        raise ValueError("z0 must match the gradient field shape")
    if not field.mask.any():
        raise IntegrationError("empty mask")
    if not np.all(np.isfinite(z0[field.mask])):
        raise ValueError("z0 must be finite on the mask")
    z = np.zeros(field.mask.shape)
    labels, count = label(field.mask)
    for k in range(1, count + 1):
        comp = labels == k
        A, b = build_system(field, z0, config.mu, comp)
        z[comp] = _solve(A, b, config)
    return z


def gradients_from_normals(normals: np.ndarray, mask: np.ndarray | None = None,
                           min_nz: float = 1e-3) -> Tuple[GradientField, int]:
    """p = -n_x / n_z, q = -n_y / n_z.  Grazing texels are dropped from the mask.

    Returns the field and the number of dropped texels.
    """
    n = np.asarray(normals, dtype=float)
    mask = np.ones(n.shape[:2], bool) if mask is None else np.asarray(mask, dtype=bool)
    nz = n[..., 2]
    ok = mask & (np.abs(nz) > min_nz)
    dropped = int(np.sum(mask & ~ok))
    if dropped:
        log.warning("%d grazing normals removed from the integration mask", dropped)
    safe = np.where(ok, nz, 1.0)
    p = np.where(ok, -n[..., 0] / safe, 0.0)
    q = np.where(ok, -n[..., 1] / safe, 0.0)
    return GradientField(p, q, ok), dropped


def make_geometry_pair(field: GradientField, z0: np.ndarray, rtol: float = 1e-8
                       ) -> Tuple[np.ndarray, np.ndarray]:
    """Detailed (mu = 1e-5) and smoothed (mu = 1e-3) integrations of one field."""
    fine = integrate(field, z0, IntegrationConfig(mu=MU_FINE, rtol=rtol))
    smooth = integrate(field, z0, IntegrationConfig(mu=MU_SMOOTH, rtol=rtol))
    return fine, smooth
