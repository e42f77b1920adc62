"""Interior and exterior ball-condition radii of voxel domains.

A boundary point ``p`` with outward normal ``n`` admits an interior ball of
radius ``r`` when some ball of radius ``>= r`` inside the domain touches ``p``.
The test works on a sub-voxel reconstruction of the boundary: the level 1/2
of the Gaussian-smoothed indicator, sampled at the boundary faces and
projected onto the level set by Newton steps.  For every ``p`` the
*deficiency*

    f_r(p) = min_c ( |p - c| - D(c) ),   D = distance to the boundary cloud,

is taken over candidate centers ``c`` on the correct side with ``D(c) >= r``
(up to the tolerance).  A tangent ball that fits gives ``f = 0``; a ball
that pokes through the boundary by depth ``delta`` gives ``f ~ delta``.  The
radius is the largest ``r`` with ``max_p f_r(p) <= h/2``, found by bisection.

Candidates are the ideal centers ``p -/+ r n`` of all boundary points plus,
for the interior, every inside cell center; pooling them makes the test
robust to normal noise and to lattice quantization of the centers.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from ..errors import ResolutionError
from .voxel import VoxelDomain

DEFAULT_R_CAP = 10.0
_NEWTON_STEPS = 4
_NORMAL_NEIGHBORS = 24
_CANDIDATES_PER_POINT = 32


@dataclass(frozen=True)
class BallConditionReport:
    r_interior: float
    r_exterior: float
    interior_witness: np.ndarray
    exterior_witness: np.ndarray
    r_cap: float

    @property
    def r_uniform(self) -> float:
        return min(self.r_interior, self.r_exterior)

    def as_dict(self) -> dict:
        return {
            "r_interior": self.r_interior,
            "r_exterior": self.r_exterior,
            "r_uniform": self.r_uniform,
            "interior_witness": [float(x) for x in self.interior_witness],
            "exterior_witness": [float(x) for x in self.exterior_witness],
            "r_cap": self.r_cap,
        }


@dataclass(frozen=True, eq=False)
class BoundaryCloud:
    """Sub-voxel boundary samples with unit outward normals."""

    domain: VoxelDomain
    points: np.ndarray
    normals: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "tree", cKDTree(self.points))

    def distance(self, x: np.ndarray) -> np.ndarray:
        return self.tree.query(x)[0]

    @cached_property
    def inside_lattice(self) -> tuple[np.ndarray, np.ndarray]:
        """Inside cell centers sorted by decreasing distance to the boundary."""
        L = self.domain.inside_centers()
        D = self.distance(L)
        order = np.argsort(-D)
        return L[order], D[order]

    def inside(self, x: np.ndarray) -> np.ndarray:
        d = self.domain
        idx = np.floor((x - d.origin) / d.h).astype(int)
        ok = np.all((idx >= 0) & (idx < np.asarray(d.dims)), axis=1)
        out = np.zeros(len(x), dtype=bool)
        out[ok] = d.mask[tuple(idx[ok].T)]
        return out


def boundary_cloud(d: VoxelDomain, sigma: float = 1.0) -> BoundaryCloud:
    """Reconstruct the boundary from the mask (``sigma`` in cells)."""
    level = ndimage.gaussian_filter(d.mask.astype(float), sigma, mode="constant") - 0.5
    grad = np.gradient(level)
    seeds = []
    for a in range(3):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[a], hi[a] = slice(None, -1), slice(1, None)
        idx = np.argwhere(d.mask[tuple(lo)] ^ d.mask[tuple(hi)]).astype(float)
        idx[:, a] += 0.5
        seeds.append(idx)
    p = np.concatenate(seeds)  # in cell-center index coordinates
    for _ in range(_NEWTON_STEPS):
        v = ndimage.map_coordinates(level, p.T, order=3)
        g = np.stack([ndimage.map_coordinates(gi, p.T, order=3) for gi in grad], axis=1)
        disp = (v / np.maximum(np.sum(g * g, axis=1), 1e-12))[:, None] * g
        # never move more than half a cell per step
        norm = np.linalg.norm(disp, axis=1)
        disp *= np.minimum(1.0, 0.5 / np.maximum(norm, 1e-300))[:, None]
        p = p - disp
    g = np.stack([ndimage.map_coordinates(gi, p.T, order=3) for gi in grad], axis=1)
    points = d.origin + (p + 0.5) * d.h
    normals = _pca_normals(points, -g)
    return BoundaryCloud(d, points, normals)


def _pca_normals(points: np.ndarray, orient: np.ndarray) -> np.ndarray:
    """Local plane-fit normals, oriented along ``orient``."""
    k = min(_NORMAL_NEIGHBORS, len(points))
    _, nb = cKDTree(points).query(points, k)
    q = points[nb] - points[nb].mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", q, q)
    n = np.linalg.eigh(cov)[1][:, :, 0]
    n *= np.sign(np.einsum("ni,ni->n", n, orient))[:, None]
    return n


def deficiency(cloud: BoundaryCloud, r: float, side: int, tol: float) -> np.ndarray:
    """``f_r`` at every boundary point; ``side`` is +1 interior, -1 exterior."""
    P, N = cloud.points, cloud.normals
    C = P - side * r * N
    Dc = cloud.distance(C)
    on_side = cloud.inside(C) if side > 0 else ~cloud.inside(C)
    keep = (Dc >= r - tol) & on_side
    cand, Dcand = C[keep], Dc[keep]
    if side > 0:
        L, DL = cloud.inside_lattice
        n = int(np.searchsorted(-DL, -(r - tol), side="right"))
        cand = np.vstack([cand, L[:n]])
        Dcand = np.concatenate([Dcand, DL[:n]])
    if len(cand) == 0:
        return np.full(len(P), np.inf)
    k = min(_CANDIDATES_PER_POINT, len(cand))
    dist, ix = cKDTree(cand).query(P, k)
    dist, ix = dist.reshape(len(P), k), ix.reshape(len(P), k)
    return np.min(dist - Dcand[ix], axis=1)


def _largest_radius(cloud: BoundaryCloud, side: int, r_cap: float, tol: float,
                    precision: float) -> tuple[float, np.ndarray]:
    f = deficiency(cloud, r_cap, side, tol)
    if f.max() <= tol:
        return r_cap, cloud.points[int(np.argmax(f))]
    lo, hi, f_hi = 0.0, r_cap, f
    if side > 0:
        # no interior ball is larger than the deepest inside point allows
        top = float(cloud.inside_lattice[1][0]) + tol + precision
        if top < hi:
            f = deficiency(cloud, top, side, tol)
            if f.max() > tol:
                hi, f_hi = top, f
            else:
                lo = top
    while hi - lo > precision:
        mid = 0.5 * (lo + hi)
        f = deficiency(cloud, mid, side, tol)
        if f.max() > tol:
            hi, f_hi = mid, f
        else:
            lo = mid
    return lo, cloud.points[int(np.argmax(f_hi))]


def ball_condition(d: VoxelDomain, r_cap: float = DEFAULT_R_CAP,
                   cloud: BoundaryCloud | None = None) -> BallConditionReport:
    """Estimate interior/exterior ball radii, both capped at ``r_cap``.

    Witnesses are the boundary points with the largest deficiency at the
    smallest failing radius (or at ``r_cap`` when nothing fails).
    """
    if not r_cap > 0:
        raise ValueError("r_cap must be positive")
    if r_cap < 2 * d.h:
        raise ResolutionError(f"r_cap={r_cap} is below two grid cells (h={d.h})")
    cloud = cloud or boundary_cloud(d)
    tol = 0.5 * d.h
    precision = 0.25 * d.h
    r_in, w_in = _largest_radius(cloud, +1, r_cap, tol, precision)
    r_out, w_out = _largest_radius(cloud, -1, r_cap, tol, precision)
    return BallConditionReport(r_in, r_out, w_in, w_out, float(r_cap))


def uniform_radius(d: VoxelDomain, r_cap: float = DEFAULT_R_CAP) -> float:
    return ball_condition(d, r_cap).r_uniform
