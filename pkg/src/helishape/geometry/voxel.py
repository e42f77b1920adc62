"""Voxelized domains and the elementary measurements on them."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull

from ..errors import CapacityError, DomainError, InvalidSpecError, PreconditionError
from .specs import UNIT_BALL_VOLUME

MIN_MARGIN = 2
_FACE6 = ndimage.generate_binary_structure(3, 1)


@dataclass(frozen=True, eq=False)
class VoxelDomain:
    """Boolean cell mask on a uniform grid.

    ``origin`` is the lower corner of cell ``(0, 0, 0)``; cell ``(i, j, k)`` has
    its center at ``origin + (i + 1/2, j + 1/2, k + 1/2) * h``.  Grids produced by
    :func:`rasterize` have origins on the global lattice ``h * Z^3`` so that two
    domains rasterized at the same ``h`` can always be compared cell by cell.
    """

    origin: np.ndarray
    h: float
    mask: np.ndarray
    _labels: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        mask = np.ascontiguousarray(self.mask, dtype=bool)
        if mask.ndim != 3:
            raise InvalidSpecError("mask must be three-dimensional")
        if not self.h > 0:
            raise InvalidSpecError("grid spacing must be positive")
        if not mask.any():
            raise InvalidSpecError("domain has no inside cell")
        m = MIN_MARGIN
        if any(s < 2 * m + 1 for s in mask.shape) or (
            mask[:m].any() or mask[-m:].any() or mask[:, :m].any() or mask[:, -m:].any()
            or mask[:, :, :m].any() or mask[:, :, -m:].any()
        ):
            raise InvalidSpecError(f"domain must keep {m} empty cells on every grid face")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float).reshape(3))
        object.__setattr__(self, "h", float(self.h))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.mask.shape

    @property
    def n_inside(self) -> int:
        return int(self.mask.sum())

    @cached_property
    def component_labels(self) -> np.ndarray:
        """6-connected component label per cell (0 outside, 1..n inside)."""
        if self._labels is not None:
            return self._labels
        labels, _ = ndimage.label(self.mask, structure=_FACE6)
        return labels

    @property
    def n_components(self) -> int:
        return int(self.component_labels.max())

    def volume(self) -> float:
        return volume(self)

    def axis_coords(self, axis: int) -> np.ndarray:
        return self.origin[axis] + (np.arange(self.dims[axis]) + 0.5) * self.h

    def cell_centers(self) -> np.ndarray:
        """Centers of all cells, shape ``dims + (3,)``."""
        xs = [self.axis_coords(a) for a in range(3)]
        return np.stack(np.meshgrid(*xs, indexing="ij"), axis=-1)

    def inside_centers(self) -> np.ndarray:
        idx = np.argwhere(self.mask)
        return self.origin + (idx + 0.5) * self.h

    def lattice_offset(self) -> np.ndarray:
        """Origin in units of ``h`` rounded to integers (the global lattice index)."""
        off = self.origin / self.h
        r = np.round(off)
        if np.max(np.abs(off - r)) > 1e-6:
            raise PreconditionError("grid origin is not on the h-lattice")
        return r.astype(int)

    def digest(self) -> str:
        """Stable hash of the geometry (origin, spacing, mask)."""
        m = hashlib.sha256()
        m.update(np.asarray([*self.origin, self.h], dtype="<f8").tobytes())
        m.update(np.asarray(self.dims, dtype="<i8").tobytes())
        m.update(np.packbits(self.mask).tobytes())
        return m.hexdigest()[:16]

    def embedded(self, offset: np.ndarray, dims) -> "VoxelDomain":
        """Same cells placed in a grid whose lattice offset is ``offset``."""
        out = np.zeros(tuple(dims), dtype=bool)
        shift = self.lattice_offset() - np.asarray(offset)
        sl = tuple(slice(s, s + n) for s, n in zip(shift, self.dims))
        if min(shift) < 0 or any(s.stop > d for s, d in zip(sl, dims)):
            raise PreconditionError("target grid does not cover the domain")
        out[sl] = self.mask
        return VoxelDomain(np.asarray(offset) * self.h, self.h, out)

    def shifted_cells(self, shift) -> "VoxelDomain":
        """Grid-aligned translation by an integer number of cells."""
        shift = np.asarray(shift, dtype=int)
        return VoxelDomain(self.origin + shift * self.h, self.h, self.mask)

    def cropped(self, margin: int = MIN_MARGIN) -> "VoxelDomain":
        """Smallest grid holding the mask with ``margin`` empty cells per face."""
        idx = np.argwhere(self.mask)
        lo, hi = idx.min(axis=0) - margin, idx.max(axis=0) + margin + 1
        pad_lo = np.maximum(-lo, 0)
        pad_hi = np.maximum(hi - np.asarray(self.dims), 0)
        mask = np.pad(self.mask, list(zip(pad_lo, pad_hi)))
        lo = lo + pad_lo
        hi = hi + pad_lo
        sl = tuple(slice(a, b) for a, b in zip(lo, hi))
        return VoxelDomain(self.origin + (lo - pad_lo) * self.h, self.h, mask[sl])


def common_grid(*domains: VoxelDomain) -> tuple[np.ndarray, tuple[int, int, int]]:
    """Lattice offset and dims of a grid covering all domains."""
    h = domains[0].h
    if any(abs(d.h - h) > 1e-12 * h for d in domains):
        raise PreconditionError("domains use different grid spacings")
    lo = np.min([d.lattice_offset() for d in domains], axis=0)
    hi = np.max([d.lattice_offset() + np.asarray(d.dims) for d in domains], axis=0)
    return lo, tuple(int(x) for x in hi - lo)


def on_common_grid(*domains: VoxelDomain) -> list[VoxelDomain]:
    off, dims = common_grid(*domains)
    return [d.embedded(off, dims) for d in domains]


def rasterize(spec, h: float, margin: int = MIN_MARGIN, *, cover=None) -> VoxelDomain:
    """Cell-center sampling of ``spec`` on the lattice ``h * Z^3``.

    ``cover`` optionally gives an extra ``(lo, hi)`` box the grid must contain.
    """
    if not h > 0:
        raise InvalidSpecError("grid spacing must be positive")
    if margin < MIN_MARGIN:
        raise InvalidSpecError(f"margin must be at least {MIN_MARGIN}")
    lo, hi = spec.bbox()
    if cover is not None:
        lo = np.minimum(lo, cover[0])
        hi = np.maximum(hi, cover[1])
    i0 = np.floor(np.asarray(lo) / h).astype(int) - margin
    i1 = np.ceil(np.asarray(hi) / h).astype(int) + margin
    dims = i1 - i0
    xs = [(i0[a] + np.arange(dims[a]) + 0.5) * h for a in range(3)]
    mask = np.empty(tuple(dims), dtype=bool)
    # Slab by slab keeps peak memory at one plane of points.
    yy, zz = np.meshgrid(xs[1], xs[2], indexing="ij")
    for i, x in enumerate(xs[0]):
        pts = np.stack([np.full_like(yy, x), yy, zz], axis=-1)
        mask[i] = spec.contains(pts)
    if not mask.any():
        raise InvalidSpecError("spec is not resolved at this grid spacing (no inside cell)")
    return VoxelDomain(i0 * h, h, mask)


def volume(d: VoxelDomain) -> float:
    return d.h**3 * d.n_inside


def equal_volume_ball_radius(V: float) -> float:
    """Radius of the ball with volume ``V``."""
    if not V > 0:
        raise DomainError(f"volume must be positive, got {V}")
    return (3.0 * V / (4.0 * math.pi)) ** (1.0 / 3.0)


def diameter(d: VoxelDomain) -> float:
    """Largest distance between inside-cell centers (farthest pair on the hull)."""
    pts = d.inside_centers()
    if len(pts) < 2:
        return 0.0
    try:
        pts = pts[ConvexHull(pts).vertices]
    except Exception:  # degenerate (flat) point sets: fall back to all points
        pass
    best = 0.0
    for start in range(0, len(pts), 2048):
        blk = pts[start:start + 2048]
        d2 = np.sum((blk[:, None, :] - pts[None, :, :]) ** 2, axis=-1)
        best = max(best, float(d2.max()))
    return math.sqrt(best)


def packing_point_count(diam: float, r0: float) -> int:
    """Number of points pairwise ``10 r0`` apart guaranteed inside a connected set."""
    if diam <= 0 or r0 <= 0:
        return 1
    return max(1, int(math.floor(math.log10(diam / r0))))


def packing_volume_bound(diam: float, r0: float) -> float:
    """Volume lower bound ``omega_3 (r0/2)^3 n`` from disjoint interior balls."""
    n = packing_point_count(diam, r0)
    return UNIT_BALL_VOLUME * (r0 / 2.0) ** 3 * n


def components(d: VoxelDomain) -> list[VoxelDomain]:
    """Each 6-connected component as its own domain on the same grid."""
    labels = d.component_labels
    return [VoxelDomain(d.origin, d.h, labels == k) for k in range(1, d.n_components + 1)]


def normalize_components(d: VoxelDomain, R: float) -> VoxelDomain:
    """Translate components by whole cells so they all sit inside ``B_R(0)``.

    Components already inside the ball stay put when possible; the rest are
    placed greedily on candidate lattice positions, keeping a closure gap of
    at least two cells between any two components.
    """
    h = d.h
    comps = components(d)
    centers_all = [c.inside_centers() for c in comps]
    radii = []
    mids = []
    for pts in centers_all:
        lo, hi = pts.min(axis=0) - h / 2, pts.max(axis=0) + h / 2
        mid = (lo + hi) / 2
        mids.append(mid)
        corners = np.abs(pts - mid) + h / 2 * math.sqrt(3)
        radii.append(float(np.max(np.linalg.norm(corners, axis=1))))
        if radii[-1] > R:
            raise CapacityError(f"a component does not fit in a ball of radius {R}")

    def fits(pts: np.ndarray) -> bool:
        return bool(np.max(np.linalg.norm(pts, axis=1)) + h * math.sqrt(3) / 2 <= R)

    gap = 2.0 * h
    placed: list[np.ndarray] = []
    shifts: list[np.ndarray] = [None] * len(comps)
    order = sorted(range(len(comps)), key=lambda k: -radii[k])

    from scipy.spatial import cKDTree

    def clear(pts: np.ndarray) -> bool:
        for other in placed:
            dist, _ = cKDTree(other).query(pts, distance_upper_bound=gap + h)
            if np.any(dist < gap + h):
                return False
        return True

    # Candidate center positions: spiral outwards on a coarse lattice.
    step = max(h, min(radii) / 2)
    n = int(math.ceil(R / step))
    g = np.arange(-n, n + 1) * step
    cand = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
    cand = cand[np.argsort(np.linalg.norm(cand, axis=1), kind="stable")]

    for k in order:
        pts = centers_all[k]
        if fits(pts) and clear(pts):
            shifts[k] = np.zeros(3, dtype=int)
            placed.append(pts)
            continue
        for c in cand:
            if np.linalg.norm(c) + radii[k] > R:
                continue
            s = np.round((c - mids[k]) / h).astype(int)
            moved = pts + s * h
            if fits(moved) and clear(moved):
                shifts[k] = s
                placed.append(moved)
                break
        else:
            raise CapacityError(f"cannot pack {len(comps)} components into B_{R}")

    all_pts = np.concatenate(placed)
    span_lo = np.floor(all_pts.min(axis=0) / h - 0.5).astype(int) - MIN_MARGIN
    span_hi = np.ceil(all_pts.max(axis=0) / h - 0.5).astype(int) + MIN_MARGIN + 1
    dims = span_hi - span_lo
    mask = np.zeros(tuple(dims), dtype=bool)
    for comp, s in zip(comps, shifts):
        idx = np.argwhere(comp.mask) + comp.lattice_offset() + s - span_lo
        mask[tuple(idx.T)] = True
    return VoxelDomain(span_lo * h, h, mask)
