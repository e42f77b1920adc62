"""Hausdorff distance between voxel sets and the relative distance of complements."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from ..errors import DomainError, PreconditionError
from .voxel import VoxelDomain, on_common_grid


def _one_sided(a: np.ndarray, b: np.ndarray, h: float) -> float:
    """``sup_{x in a} dist(x, b)`` between cell-center sets on one grid."""
    # distance_transform_edt measures the distance to the nearest zero, i.e.
    # to the nearest cell of ``b``; exact Euclidean, not a chamfer metric.
    dist = ndimage.distance_transform_edt(~b, sampling=h)
    return float(dist[a].max())


def mask_hausdorff(a: np.ndarray, b: np.ndarray, h: float) -> float:
    if not a.any() or not b.any():
        raise DomainError("Hausdorff distance needs two nonempty sets")
    if a.shape != b.shape:
        raise PreconditionError("masks live on different grids")
    return max(_one_sided(a, b, h), _one_sided(b, a, h))


def hausdorff(k1: VoxelDomain, k2: VoxelDomain) -> float:
    """Hausdorff distance between the inside-cell sets of two domains."""
    a, b = on_common_grid(k1, k2)
    return mask_hausdorff(a.mask, b.mask, a.h)


def _ball_grid(h: float, R0: float, center: np.ndarray, margin: int = 2):
    lo = np.floor((center - R0) / h).astype(int) - margin
    hi = np.ceil((center + R0) / h).astype(int) + margin
    dims = tuple(int(x) for x in hi - lo)
    axes = [(lo[a] + np.arange(dims[a]) + 0.5) * h for a in range(3)]
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    r2 = (X - center[0]) ** 2 + (Y - center[1]) ** 2 + (Z - center[2]) ** 2
    return lo, dims, r2 <= R0 * R0


def relative_hausdorff(o1: VoxelDomain, o2: VoxelDomain, R0: float,
                       center=(0.0, 0.0, 0.0)) -> float:
    """Hausdorff distance of the complements ``B_R0 \\ O_i`` within the closed ball."""
    c = np.asarray(center, dtype=float)
    if abs(o1.h - o2.h) > 1e-12 * o1.h:
        raise PreconditionError("domains use different grid spacings")
    h = o1.h
    for d in (o1, o2):
        r = np.linalg.norm(d.inside_centers() - c, axis=1).max()
        if r > R0:
            raise PreconditionError(f"domain reaches radius {r:.4g} beyond R0={R0}")
    lo, dims, ball = _ball_grid(h, R0, c)
    k = []
    for d in (o1, o2):
        idx = np.argwhere(d.mask) + d.lattice_offset() - lo
        m = np.zeros(dims, dtype=bool)
        m[tuple(idx.T)] = True
        k.append(ball & ~m)
    return mask_hausdorff(k[0], k[1], h)
