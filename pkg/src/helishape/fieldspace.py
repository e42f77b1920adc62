"""Staggered (marker-and-cell) vector fields on voxel domains.

A field stores one normal component per *active* face, i.e. per face shared by
two inside cells.  Faces between an inside and an outside cell carry an
implicit zero, which makes tangency to the staircase boundary exact.  Seen as
a cochain complex on the dual graph (inside cells are vertices, active faces
are edges, edges whose four surrounding cells are inside are plaquettes),
``gradient`` is the coboundary on vertices and ``curl`` the coboundary on
edges; ``div = -gradient^T``.
"""

from __future__ import annotations

import logging
import math
import warnings
import weakref
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import pyamg
import scipy.sparse as sp
from scipy import ndimage
from scipy.sparse.linalg import lobpcg

from .errors import ConfigError, PreconditionError, SolverError
from .geometry.io import parse_keyvalue, voxel_from_text, voxel_to_text
from .geometry.voxel import VoxelDomain

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
CG_MAXITER = 2000
# The default "diagonal" weighting estimates a spectral radius from an
# unseeded random vector; "local" weighting keeps the hierarchy reproducible.
AMG_SMOOTH = ("jacobi", {"omega": 4.0 / 3.0, "weighting": "local"})
_CYCLIC = ((1, 2), (2, 0), (0, 1))  # (a, b) with a x b = c for c = 0, 1, 2


def _sl(axis: int, part: slice) -> tuple:
    s = [slice(None)] * 3
    s[axis] = part
    return tuple(s)


class FaceLayout:
    """Index bookkeeping and sparse operators for one domain."""

    def __init__(self, domain: VoxelDomain):
        self.domain = domain
        mask = domain.mask
        self.h = domain.h
        self.dims = mask.shape
        self.cell_index = np.full(mask.shape, -1, dtype=np.int64)
        self.cell_index[mask] = np.arange(int(mask.sum()))
        self.n_cells = int(mask.sum())

        self.face_masks = []
        self.face_offsets = [0]
        for a in range(3):
            fm = mask[_sl(a, slice(None, -1))] & mask[_sl(a, slice(1, None))]
            self.face_masks.append(fm)
            self.face_offsets.append(self.face_offsets[-1] + int(fm.sum()))
        self.n_faces = self.face_offsets[-1]

    def axis_slice(self, a: int) -> slice:
        return slice(self.face_offsets[a], self.face_offsets[a + 1])

    def face_index_grid(self, a: int) -> np.ndarray:
        idx = np.full(self.face_masks[a].shape, -1, dtype=np.int64)
        idx[self.face_masks[a]] = np.arange(self.face_offsets[a], self.face_offsets[a + 1])
        return idx

    # -- dense <-> packed -------------------------------------------------
    def unpack(self, values: np.ndarray) -> list[np.ndarray]:
        out = []
        for a in range(3):
            arr = np.zeros(self.face_masks[a].shape)
            arr[self.face_masks[a]] = values[self.axis_slice(a)]
            out.append(arr)
        return out

    def pack(self, arrays) -> np.ndarray:
        return np.concatenate([np.asarray(arrays[a])[self.face_masks[a]] for a in range(3)])

    def face_centers(self, a: int) -> np.ndarray:
        """Physical centers of the active faces normal to axis ``a``."""
        idx = np.argwhere(self.face_masks[a]).astype(float) + 0.5
        idx[:, a] += 0.5
        return self.domain.origin + idx * self.h

    # -- operators ------------------------------------------------------------
    @cached_property
    def gradient(self) -> sp.csr_matrix:
        """Cell scalars -> face normals, ``(phi[hi] - phi[lo]) / h``."""
        rows, cols, vals = [], [], []
        for a in range(3):
            fidx = self.face_index_grid(a)
            sel = fidx >= 0
            lo = self.cell_index[_sl(a, slice(None, -1))][sel]
            hi = self.cell_index[_sl(a, slice(1, None))][sel]
            f = fidx[sel]
            rows += [f, f]
            cols += [hi, lo]
            vals += [np.full(f.size, 1.0 / self.h), np.full(f.size, -1.0 / self.h)]
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_faces, self.n_cells),
        )

    @cached_property
    def curl(self) -> sp.csr_matrix:
        """Face normals -> circulation per plaquette (edge with four inside cells)."""
        mask = self.domain.mask
        fidx = [self.face_index_grid(a) for a in range(3)]
        rows, cols, vals = [], [], []
        n_edges = 0
        for c, (a, b) in enumerate(_CYCLIC):
            # plaquette spanned by axes a, b at lower corner cell (i, j)
            def cells(da, db):
                s = [slice(None)] * 3
                n = list(mask.shape)
                s[a] = slice(da, n[a] - 1 + da)
                s[b] = slice(db, n[b] - 1 + db)
                return tuple(s)

            pm = mask[cells(0, 0)] & mask[cells(1, 0)] & mask[cells(0, 1)] & mask[cells(1, 1)]
            k = int(pm.sum())
            if k == 0:
                continue
            eid = np.arange(n_edges, n_edges + k)
            n_edges += k

            def face(axis, da, db):
                s = [slice(None)] * 3
                n = list(fidx[axis].shape)
                s[a] = slice(da, da + mask.shape[a] - 1)
                s[b] = slice(db, db + mask.shape[b] - 1)
                return fidx[axis][tuple(s)][pm]

            # loop (0,0) -> (1,0) -> (1,1) -> (0,1) -> (0,0)
            for f, sgn in ((face(a, 0, 0), 1.0), (face(b, 1, 0), 1.0),
                           (face(a, 0, 1), -1.0), (face(b, 0, 0), -1.0)):
                rows.append(eid)
                cols.append(f)
                vals.append(np.full(k, sgn / self.h))
        if n_edges == 0:
            return sp.csr_matrix((0, self.n_faces))
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n_edges, self.n_faces),
        )

    @cached_property
    def laplacian(self) -> sp.csr_matrix:
        """Neumann cell Laplacian ``G^T G`` (positive semidefinite)."""
        g = self.gradient
        return (g.T @ g).tocsr()

    @cached_property
    def _amg(self):
        lap = self.laplacian
        # Small diagonal shift only inside the preconditioner: keeps the
        # hierarchy nonsingular while CG itself solves the exact system.
        shifted = (lap + sp.identity(lap.shape[0]) * (1e-6 / self.h**2)).tocsr()
        return pyamg.smoothed_aggregation_solver(shifted, symmetry="symmetric", smooth=AMG_SMOOTH)

    @cached_property
    def component_of_cell(self) -> np.ndarray:
        return self.domain.component_labels[self.domain.mask] - 1

    def remove_component_means(self, x: np.ndarray) -> np.ndarray:
        comp = self.component_of_cell
        n = comp.max() + 1
        means = np.bincount(comp, weights=x, minlength=n) / np.bincount(comp, minlength=n)
        return x - means[comp]

    def solve_neumann(self, rhs: np.ndarray, tol: float = DEFAULT_TOL) -> np.ndarray:
        """Solve ``G^T G phi = rhs`` by AMG-preconditioned conjugate gradients.

        ``rhs`` is made compatible by removing its mean on every component;
        the returned potential has zero mean per component.
        """
        b = self.remove_component_means(rhs)
        bnorm = np.linalg.norm(b)
        if bnorm == 0:
            return np.zeros_like(b)
        lap = self.laplacian
        prec = self._amg.aspreconditioner(cycle="V")
        x = np.zeros_like(b)
        r = b.copy()
        z = self.remove_component_means(prec @ r)
        p = z.copy()
        rz = r @ z
        for it in range(CG_MAXITER):
            ap = lap @ p
            alpha = rz / (p @ ap)
            x += alpha * p
            r -= alpha * ap
            res = np.linalg.norm(r) / bnorm
            if res <= tol:
                return self.remove_component_means(x)
            z = self.remove_component_means(prec @ r)
            rz_new = r @ z
            p = z + (rz_new / rz) * p
            rz = rz_new
        raise SolverError(f"Neumann CG did not converge (relative residual {res:.3e})", res)

    # -- cell-centered sampling -----------------------------------------------
    def to_cells(self, values: np.ndarray) -> np.ndarray:
        """Average the two faces of each cell per axis; shape ``(3,) + dims``."""
        out = np.zeros((3,) + self.dims)
        for a, arr in enumerate(self.unpack(values)):
            out[a][_sl(a, slice(None, -1))] += 0.5 * arr
            out[a][_sl(a, slice(1, None))] += 0.5 * arr
        return out

    def from_cells_adjoint(self, w: np.ndarray) -> np.ndarray:
        """Transpose of :meth:`to_cells`."""
        parts = []
        for a in range(3):
            arr = 0.5 * (w[a][_sl(a, slice(None, -1))] + w[a][_sl(a, slice(1, None))])
            parts.append(arr[self.face_masks[a]])
        return np.concatenate(parts)


_LAYOUTS: "weakref.WeakKeyDictionary[VoxelDomain, FaceLayout]" = weakref.WeakKeyDictionary()


def face_layout(domain: VoxelDomain) -> FaceLayout:
    lay = _LAYOUTS.get(domain)
    if lay is None:
        lay = FaceLayout(domain)
        _LAYOUTS[domain] = lay
    return lay


@dataclass(frozen=True, eq=False)
class FaceField:
    """Normal components on the active faces of ``domain`` (packed x, y, z)."""

    domain: VoxelDomain
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (face_layout(self.domain).n_faces,):
            raise PreconditionError("face value count does not match the domain layout")
        if not np.all(np.isfinite(v)):
            raise PreconditionError("field values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def layout(self) -> FaceLayout:
        return face_layout(self.domain)

    def __add__(self, other: "FaceField") -> "FaceField":
        _same_domain(self, other)
        return FaceField(self.domain, self.values + other.values)

    def __sub__(self, other: "FaceField") -> "FaceField":
        _same_domain(self, other)
        return FaceField(self.domain, self.values - other.values)

    def __mul__(self, c: float) -> "FaceField":
        return FaceField(self.domain, c * self.values)

    __rmul__ = __mul__

    def __neg__(self) -> "FaceField":
        return FaceField(self.domain, -self.values)

    def dot(self, other: "FaceField") -> float:
        """Discrete L2 inner product ``h^3 sum F G``."""
        _same_domain(self, other)
        return self.domain.h**3 * float(self.values @ other.values)

    def norm(self) -> float:
        return math.sqrt(max(self.dot(self), 0.0))

    def cell_vectors(self) -> np.ndarray:
        return self.layout.to_cells(self.values)


def _same_domain(f: FaceField, g: FaceField):
    if f.domain is not g.domain:
        raise PreconditionError("fields live on different domains")


def zeros(domain: VoxelDomain) -> FaceField:
    return FaceField(domain, np.zeros(face_layout(domain).n_faces))


def sample(domain: VoxelDomain, fn) -> FaceField:
    """Normal components of a callable vector field ``fn(points) -> (n, 3)`` at face centers."""
    lay = face_layout(domain)
    parts = []
    for a in range(3):
        pts = lay.face_centers(a)
        parts.append(np.asarray(fn(pts))[:, a] if len(pts) else np.zeros(0))
    return FaceField(domain, np.concatenate(parts))


def evaluate(F: FaceField, points: np.ndarray, extend: bool = False) -> np.ndarray:
    """Trilinear interpolation of each staggered component at ``points`` (n, 3).

    By default inactive faces count as zero, so the interpolant vanishes
    outside the domain.  With ``extend=True`` every component is first
    continued from its nearest active face, which avoids the half-strength
    boundary layer when sampling at points near or slightly beyond the boundary.
    """
    lay = F.layout
    d = F.domain
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.zeros((len(pts), 3))
    for a, arr in enumerate(lay.unpack(F.values)):
        if extend and lay.face_masks[a].any():
            near = ndimage.distance_transform_edt(~lay.face_masks[a], return_distances=False,
                                                  return_indices=True)
            arr = arr[tuple(near)]
        idx = (pts - d.origin) / d.h - 0.5
        idx[:, a] -= 0.5
        mode = "nearest" if extend else "constant"
        out[:, a] = ndimage.map_coordinates(arr, idx.T, order=1, mode=mode, cval=0.0)
    return out


def field_to_text(F: FaceField) -> str:
    """Decimal-text export: domain header, then one line of face values per axis."""
    lay = F.layout
    lines = [voxel_to_text(F.domain).rstrip("\n")]
    for a, name in enumerate("xyz"):
        vals = F.values[lay.axis_slice(a)]
        lines.append(f"faces_{name} = " + " ".join(repr(float(v)) for v in vals))
    return "\n".join(lines) + "\n"


def field_from_text(text: str) -> FaceField:
    d = voxel_from_text(text)
    kv = parse_keyvalue(text)
    parts = []
    for name in "xyz":
        key = f"faces_{name}"
        if key not in kv:
            raise ConfigError(f"missing key {key!r}")
        try:
            parts.append(np.array([float(v) for v in kv[key][0].split()]))
        except ValueError:
            raise ConfigError(f"{key}: expected numbers", kv[key][1]) from None
    return FaceField(d, np.concatenate(parts))


def random_field(domain: VoxelDomain, seed: int = 0) -> FaceField:
    rng = np.random.default_rng(seed)
    return FaceField(domain, rng.standard_normal(face_layout(domain).n_faces))


def discrete_gradient(domain: VoxelDomain, phi: np.ndarray) -> FaceField:
    """Gradient of a scalar given per inside cell (or as a full grid array)."""
    lay = face_layout(domain)
    phi = np.asarray(phi, dtype=float)
    if phi.shape == lay.dims:
        phi = phi[domain.mask]
    return FaceField(domain, lay.gradient @ phi)


def discrete_divergence(F: FaceField) -> np.ndarray:
    """Net outward face flux per cell divided by ``h``, as a full grid (0 outside)."""
    lay = F.layout
    out = np.zeros(lay.dims)
    out[F.domain.mask] = -(lay.gradient.T @ F.values)
    return out


def discrete_curl(F: FaceField) -> np.ndarray:
    """Circulation density on every plaquette whose four cells are inside."""
    return F.layout.curl @ F.values


def project_div_free_tangent(F: FaceField, tol: float = DEFAULT_TOL) -> FaceField:
    """L2-orthogonal projection onto discretely divergence-free tangent fields."""
    lay = F.layout
    rhs = lay.gradient.T @ F.values
    phi = lay.solve_neumann(rhs, tol)
    return FaceField(F.domain, F.values - lay.gradient @ phi)


def magnetic_energy(F: FaceField) -> float:
    """``h^3`` times the sum of squared face values (every active face owns ``h^3``)."""
    return F.dot(F)


@dataclass(frozen=True)
class HarmonicBasis:
    domain: VoxelDomain
    fields: tuple
    eigenvalues: tuple = ()
    gap_ratio: float = float("inf")

    @property
    def dimension(self) -> int:
        return len(self.fields)

    def matrix(self) -> np.ndarray:
        if not self.fields:
            return np.zeros((face_layout(self.domain).n_faces, 0))
        return np.stack([f.values for f in self.fields], axis=1)


def euler_characteristic(domain: VoxelDomain) -> int:
    """``V - E + F - C`` of the dual cubical complex of the inside cells."""
    m = domain.mask
    V = int(m.sum())
    E = sum(int((m[_sl(a, slice(None, -1))] & m[_sl(a, slice(1, None))]).sum()) for a in range(3))
    F = face_layout(domain).curl.shape[0]
    C = int((m[:-1, :-1, :-1] & m[1:, :-1, :-1] & m[:-1, 1:, :-1] & m[:-1, :-1, 1:]
             & m[1:, 1:, :-1] & m[1:, :-1, 1:] & m[:-1, 1:, 1:] & m[1:, 1:, 1:]).sum())
    return V - E + F - C


def estimated_betti1(domain: VoxelDomain) -> int:
    """First Betti number from the Euler characteristic and the other Betti numbers."""
    b0 = domain.n_components
    # Cavities of the cubical complex: bounded 26-connected complement components
    # (the complex closes plaquettes and cubes, so its complement is 26-adjacent).
    comp, n = ndimage.label(~domain.mask, structure=np.ones((3, 3, 3)))
    b2 = n - 1
    return b0 + b2 - euler_characteristic(domain)


def hodge_laplacian(domain: VoxelDomain) -> sp.csr_matrix:
    lay = face_layout(domain)
    g, c = lay.gradient, lay.curl
    return (g @ g.T + c.T @ c).tocsr()


def harmonic_basis(domain: VoxelDomain, tol: float = DEFAULT_TOL, *, seed: int = 0,
                   max_iter: int = 300) -> HarmonicBasis:
    """Orthonormal basis of discrete harmonic tangent fields.

    Preconditioned subspace iteration (LOBPCG with an algebraic-multigrid
    preconditioner) for the bottom of the Hodge Laplacian ``G G^T + C^T C``,
    with ``betti1 + 2`` candidate vectors.  Candidates whose eigenvalue lies
    below ``1e-6 / h^2`` form the kernel.
    """
    lay = face_layout(domain)
    n = lay.n_faces
    b1 = max(estimated_betti1(domain), 0)
    k = min(b1 + 2, max(n // 5, 1))
    if n < 10:
        return HarmonicBasis(domain, ())
    L = hodge_laplacian(domain)
    scale = 1.0 / domain.h**2
    ml = pyamg.smoothed_aggregation_solver((L + 1e-2 * sp.identity(n)).tocsr(),
                                           symmetry="symmetric", smooth=AMG_SMOOTH)
    X0 = np.random.default_rng(seed).standard_normal((n, k))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        theta, X = lobpcg(L, X0, M=ml.aspreconditioner(), largest=False,
                          tol=max(tol, 1e-12) * math.sqrt(scale), maxiter=max_iter)
    order = np.argsort(theta)
    theta, X = theta[order], X[:, order]
    thresh = 1e-6 * scale
    keep = theta <= thresh
    dim = int(keep.sum())
    gap = float("inf")
    if dim < k:
        top = float(max(theta[keep].max(), 0.0)) if dim else 0.0
        gap = float(theta[~keep].min() / top) if top > 0 else float("inf")
    if dim != b1:
        log.warning("harmonic kernel dimension %d differs from Euler estimate %d", dim, b1)
    if dim == k or gap < 1e3:
        log.warning("weak spectral gap separating harmonic modes (ratio %.2e)", gap)
    fields = []
    if dim:
        # Exact div-free projection keeps the fields curl-free (C G = 0).
        vecs = np.column_stack([
            project_div_free_tangent(FaceField(domain, X[:, j]), min(tol, 1e-10)).values
            for j in range(dim)
        ])
        vecs = np.linalg.qr(vecs)[0] / domain.h**1.5
        fields = [FaceField(domain, vecs[:, j]) for j in range(dim)]
    return HarmonicBasis(domain, tuple(fields), tuple(float(t) for t in theta), gap)


def project_zero_flux(F: FaceField, basis: HarmonicBasis) -> FaceField:
    """Remove the L2 component of ``F`` along the harmonic basis."""
    if basis.domain is not F.domain:
        raise PreconditionError("harmonic basis belongs to a different domain")
    v = F.values.copy()
    for Y in basis.fields:
        v -= F.domain.h**3 * (Y.values @ v) * Y.values
    return FaceField(F.domain, v)


@dataclass(frozen=True)
class Section:
    """Planar cross-section: faces normal to ``axis`` between cell layers
    ``index`` and ``index + 1``, restricted to one connected piece of the cut.

    ``label`` selects the piece (1-based, ordered by size, largest first).
    """

    axis: int
    index: int
    label: int = 1


def section_faces(domain: VoxelDomain, section: Section) -> np.ndarray:
    lay = face_layout(domain)
    a = section.axis
    fm = lay.face_masks[a]
    if not 0 <= section.index < fm.shape[a]:
        raise PreconditionError("section plane outside the grid")
    plane = np.take(fm, section.index, axis=a)
    lab, n = ndimage.label(plane, structure=ndimage.generate_binary_structure(2, 1))
    if n == 0:
        raise PreconditionError("section does not cut the domain")
    sizes = np.bincount(lab.ravel())[1:]
    order = np.argsort(-sizes, kind="stable") + 1
    if section.label > n:
        raise PreconditionError("section piece label out of range")
    piece = lab == order[section.label - 1]
    # The piece must span: every boundary face of the cut piece must be a
    # boundary face of the domain (its in-plane neighbors in the cell layers
    # adjacent to the plane are outside on at least one side).
    lo = np.take(domain.mask, section.index, axis=a)
    hi = np.take(domain.mask, section.index + 1, axis=a)
    grown = ndimage.binary_dilation(piece, structure=ndimage.generate_binary_structure(2, 1))
    rim = grown & ~piece
    if np.any(rim & lo & hi):
        raise PreconditionError("section is not spanning: its rim is interior")
    full = np.zeros(fm.shape, dtype=bool)
    idx = [slice(None)] * 3
    idx[a] = section.index
    full[tuple(idx)] = piece
    fidx = lay.face_index_grid(a)
    return fidx[full]


def flux_through_section(F: FaceField, section: Section) -> float:
    """Sum of normal face values through the cut, times ``h^2``."""
    faces = section_faces(F.domain, section)
    return F.domain.h**2 * float(F.values[faces].sum())
