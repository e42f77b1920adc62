"""Discrete Biot-Savart operator, helicity, and the curl-consistency check.

The operator is midpoint quadrature of

    BS(B)(x) = 1/(4 pi) int B(y) x (x - y) / |x - y|^3 dy

over the inside cells, with the source cell at ``x`` itself excluded.  Fields
living on faces are first averaged to cell centers.  Two engines evaluate the
same sum: ``"fft"`` (zero-padded convolution, exact up to rounding) and
``"direct"`` (blocked pairwise summation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .fieldspace import FaceField, face_layout
from .geometry.voxel import VoxelDomain

FOUR_PI = 4.0 * math.pi


@dataclass(eq=False)
class BSKernelPlan:
    """Precomputed kernel for one domain.

    Sources and targets are the inside cells; the self-interaction is dropped
    by setting the kernel to zero at zero offset.
    """

    domain: VoxelDomain
    engine: str = "fft"
    block: int = 128
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.engine not in ("fft", "direct"):
            raise ValueError(f"unknown engine {self.engine!r}")
        idx = np.argwhere(self.domain.mask)
        lo, hi = idx.min(axis=0), idx.max(axis=0) + 1
        self.box = tuple(slice(a, b) for a, b in zip(lo, hi))
        self.box_shape = tuple(int(b - a) for a, b in zip(lo, hi))

    @property
    def h(self) -> float:
        return self.domain.h

    @cached_property
    def fft_shape(self) -> tuple[int, int, int]:
        return tuple(sfft.next_fast_len(2 * n - 1, real=True) for n in self.box_shape)

    @cached_property
    def kernel_hat(self) -> np.ndarray:
        """Real FFT of ``h^3 r / (4 pi |r|^3)`` on the wrapped offset grid."""
        shape = self.fft_shape
        axes = []
        for n, m in zip(self.box_shape, shape):
            off = np.zeros(m)
            k = np.arange(m)
            # offsets 0..n-1 and -(n-1)..-1 wrapped; the rest never contributes
            off[:n] = k[:n]
            off[m - n + 1:] = k[m - n + 1:] - m
            axes.append(off * self.h)
        X, Y, Z = np.meshgrid(*axes, indexing="ij")
        r2 = X * X + Y * Y + Z * Z
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(r2 > 0, self.h**3 / (FOUR_PI * r2 * np.sqrt(r2)), 0.0)
        out = np.stack([sfft.rfftn(c * w, shape) for c in (X, Y, Z)])
        return out

    @cached_property
    def source_points(self) -> np.ndarray:
        return self.domain.inside_centers()

    def apply_cells(self, v: np.ndarray) -> np.ndarray:
        """BS of a cell-centered field ``v`` of shape ``(3,) + dims``; zero outside."""
        out = np.zeros_like(v)
        mask = self.domain.mask
        if self.engine == "fft":
            shape = self.fft_shape
            vb = v[(slice(None),) + self.box] * mask[self.box]
            Vh = [sfft.rfftn(vb[j], shape) for j in range(3)]
            K = self.kernel_hat
            # (v x K)_i = v_j K_k - v_k K_j, (i, j, k) cyclic
            for i, (j, k) in enumerate(((1, 2), (2, 0), (0, 1))):
                prod = Vh[j] * K[k] - Vh[k] * K[j]
                full = sfft.irfftn(prod, shape)
                out[(i,) + self.box] = full[tuple(slice(0, n) for n in self.box_shape)]
            out *= mask
            return out
        pts = self.source_points
        src = v[:, mask].T
        res = np.zeros_like(src)
        for s in range(0, len(pts), self.block):
            tgt = pts[s:s + self.block]
            d = tgt[:, None, :] - pts[None, :, :]
            r2 = np.einsum("ijk,ijk->ij", d, d)
            with np.errstate(divide="ignore"):
                w = np.where(r2 > 0, self.h**3 / (FOUR_PI * r2 * np.sqrt(r2)), 0.0)
            d *= w[..., None]
            res[s:s + self.block] = np.cross(src[None, :, :], d).sum(axis=1)
        out[:, mask] = res.T
        return out


def make_plan(domain: VoxelDomain, engine: str = "fft") -> BSKernelPlan:
    return BSKernelPlan(domain, engine)


def _plan_for(B: FaceField, plan: BSKernelPlan | None) -> BSKernelPlan:
    if plan is None:
        return BSKernelPlan(B.domain)
    if plan.domain is not B.domain and plan.domain.digest() != B.domain.digest():
        raise ValueError("plan and field belong to different domains")
    return plan


def bs_apply(B: FaceField, plan: BSKernelPlan | None = None) -> np.ndarray:
    """Cell-centered BS(B), shape ``(3,) + dims``, zero outside the domain."""
    plan = _plan_for(B, plan)
    return plan.apply_cells(B.cell_vectors())


def helicity_pair(B1: FaceField, B2: FaceField, plan: BSKernelPlan | None = None) -> float:
    """Symmetric bilinear form ``h^3 sum_cells B1 . BS(B2)``."""
    plan = _plan_for(B1, plan)
    return B1.domain.h**3 * float(np.sum(B1.cell_vectors() * bs_apply(B2, plan)))


def helicity(B: FaceField, plan: BSKernelPlan | None = None) -> float:
    return helicity_pair(B, B, plan)


def bs_face_operator(plan: BSKernelPlan):
    """Face-space symmetric operator ``A^T BS A`` so that ``H(B) = h^3 B . op(B)``."""
    lay = face_layout(plan.domain)

    def op(values: np.ndarray) -> np.ndarray:
        return lay.from_cells_adjoint(plan.apply_cells(lay.to_cells(values)))

    return op


@dataclass(frozen=True)
class CurlConsistency:
    max_relative: float
    mean_relative: float
    n_cells: int


def curl_cells(v: np.ndarray, h: float) -> np.ndarray:
    """Central-difference curl of a cell-centered field (interior cells only)."""
    out = np.zeros_like(v)
    d = lambda f, a: (np.roll(f, -1, axis=a) - np.roll(f, 1, axis=a)) / (2 * h)
    out[0] = d(v[2], 1) - d(v[1], 2)
    out[1] = d(v[0], 2) - d(v[2], 0)
    out[2] = d(v[1], 0) - d(v[0], 1)
    return out


def curl_consistency(B: FaceField, plan: BSKernelPlan | None = None, depth: int = 3) -> CurlConsistency:
    """Compare ``curl BS(B)`` with ``B`` on cells at least ``depth`` cells inside."""
    from scipy import ndimage

    plan = _plan_for(B, plan)
    mask = B.domain.mask
    # BS is evaluated on inside cells only; keep the stencil inside as well.
    inner = ndimage.binary_erosion(mask, iterations=depth, border_value=0)
    Bc = B.cell_vectors()
    cb = curl_cells(bs_apply(B, plan), B.domain.h)
    diff = np.linalg.norm(cb[:, inner] - Bc[:, inner], axis=0)
    ref = np.linalg.norm(Bc[:, inner], axis=0)
    scale = float(ref.max()) if ref.size else 0.0
    if scale == 0.0:
        return CurlConsistency(0.0, 0.0, int(inner.sum()))
    rel = diff / scale
    return CurlConsistency(float(rel.max()), float(rel.mean()), int(inner.sum()))
