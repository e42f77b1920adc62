"""Largest positive eigenvalue of the projected Biot-Savart operator.

On the subspace ``T`` of divergence-free tangent fields (or its zero-flux part
``ZF``) the operator ``K = P BS P`` is symmetric in the discrete L2 product,
and ``H(B)/M(B)`` is its Rayleigh quotient.  The infimum of ``M/H`` over the
subspace, i.e. nu (``T``) or eta (``ZF``), is therefore ``1/sigma_plus``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .biotsavart import BSKernelPlan, bs_face_operator, helicity
from .errors import DegenerateSpectrumError, DomainError, SpectralError
from .fieldspace import (
    DEFAULT_TOL,
    FaceField,
    HarmonicBasis,
    face_layout,
    harmonic_basis,
    magnetic_energy,
    project_div_free_tangent,
    project_zero_flux,
)
from .geometry.voxel import VoxelDomain

log = logging.getLogger(__name__)

SUBSPACES = ("T", "ZF")


@dataclass(frozen=True, eq=False)
class SpectralResult:
    sigma_plus: float
    nu_or_eta: float
    eigenfield: FaceField
    residual: float
    iterations: int
    subspace: str
    tol: float

    @property
    def domain(self) -> VoxelDomain:
        return self.eigenfield.domain

    def record(self) -> dict:
        d = self.domain
        return {
            "domain_hash": d.digest(),
            "subspace": self.subspace,
            "h": d.h,
            "sigma_plus": self.sigma_plus,
            "value": self.nu_or_eta,
            "residual": self.residual,
            "iterations": self.iterations,
        }


class ProjectedOperator:
    """``K = P BS P`` on packed face vectors, plus the projection ``P`` itself."""

    def __init__(self, domain: VoxelDomain, subspace: str = "T", tol: float = DEFAULT_TOL,
                 basis: HarmonicBasis | None = None, plan: BSKernelPlan | None = None):
        if subspace not in SUBSPACES:
            raise ValueError(f"subspace must be one of {SUBSPACES}")
        self.domain = domain
        self.subspace = subspace
        self.tol = tol
        self.plan = plan or BSKernelPlan(domain)
        self._bs = bs_face_operator(self.plan)
        self.basis = None
        if subspace == "ZF":
            self.basis = basis if basis is not None else harmonic_basis(domain, tol)
        self.n = face_layout(domain).n_faces
        self.applies = 0

    def project(self, v: np.ndarray) -> np.ndarray:
        # Inner solves run tighter than the outer tolerance so that their
        # error stays below the eigen-residual target.
        F = project_div_free_tangent(FaceField(self.domain, v), min(self.tol, 1e-10))
        if self.basis is not None and self.basis.dimension:
            F = project_zero_flux(F, self.basis)
        return F.values

    def __call__(self, v: np.ndarray) -> np.ndarray:
        """Apply ``K`` to a vector already in the subspace."""
        self.applies += 1
        return self.project(self._bs(v))


def _positive_ritz(K: ProjectedOperator, v0: np.ndarray, tol: float, max_applies: int,
                   krylov: int = 10):
    """Power iteration with Rayleigh-Ritz sign resolution.

    Each sweep expands the current iterate into the block
    ``[v, Kv, ..., K^m v]``, solves the small projected eigenproblem and keeps
    the Ritz vector of the largest *positive* Ritz value, which removes the
    pull of the negative end of the spectrum without iterating on ``K^2``.
    """
    v = v0 / np.linalg.norm(v0)
    history: list[float] = []
    theta = float("nan")
    res = float("inf")
    anorm = 0.0
    while K.applies < max_applies:
        Q = np.zeros((K.n, krylov + 1))
        Q[:, 0] = v
        AQ = np.zeros_like(Q)
        m = krylov
        for j in range(krylov):
            w = K(Q[:, j])
            AQ[:, j] = w
            for _ in range(2):  # full reorthogonalization, twice is enough
                w = w - Q[:, : j + 1] @ (Q[:, : j + 1].T @ w)
            nw = np.linalg.norm(w)
            if nw <= 1e-14 * max(np.linalg.norm(AQ[:, j]), 1e-300):
                m = j + 1
                break
            Q[:, j + 1] = w / nw
        Qm, AQm = Q[:, :m], AQ[:, :m]
        T = Qm.T @ AQm
        T = 0.5 * (T + T.T)
        w_ritz, U = np.linalg.eigh(T)
        anorm = max(anorm, float(np.max(np.abs(w_ritz))))
        theta = float(w_ritz[-1])
        u = U[:, -1]
        v = Qm @ u
        v /= np.linalg.norm(v)
        r = AQm @ u - theta * (Qm @ u)
        res = float(np.linalg.norm(r) / max(abs(theta), 1e-300))
        history.append(theta)
        if theta <= 1e-12 * max(anorm, 1e-300):
            raise DegenerateSpectrumError("no positive eigenvalue resolved at this grid spacing",
                                          res)
        # Eigenvalue stable over the last sweeps and residual below sqrt(tol).
        stable = len(history) >= 2 and abs(history[-1] - history[-2]) <= tol * abs(theta)
        if stable and res <= math.sqrt(tol):
            return theta, v, res
    raise SpectralError(f"eigensolver did not converge in {max_applies} applications "
                        f"(last residual {res:.3e})", res)


def sigma_plus(d: VoxelDomain, subspace: str = "T", tol: float = DEFAULT_TOL, *,
               seed: int = 0, max_applies: int = 400, basis: HarmonicBasis | None = None,
               plan: BSKernelPlan | None = None) -> SpectralResult:
    """Largest positive eigenvalue of ``P BS P`` on the tagged subspace."""
    K = ProjectedOperator(d, subspace, tol, basis, plan)
    rng = np.random.default_rng(seed)
    v0 = K.project(rng.standard_normal(K.n))
    theta, v, res = _positive_ritz(K, v0, tol, max_applies)
    F = FaceField(d, K.project(v))
    F = F * (1.0 / math.sqrt(magnetic_energy(F)))
    return SpectralResult(theta, 1.0 / theta, F, res, K.applies, subspace, tol)


def nu_of(d: VoxelDomain, tol: float = DEFAULT_TOL, **kw) -> SpectralResult:
    return sigma_plus(d, "T", tol, **kw)


def eta_of(d: VoxelDomain, tol: float = DEFAULT_TOL, **kw) -> SpectralResult:
    return sigma_plus(d, "ZF", tol, **kw)


def lambda_of(d: VoxelDomain, tol: float = DEFAULT_TOL, **kw) -> float:
    return 1.0 / nu_of(d, tol, **kw).nu_or_eta


def objective(d: VoxelDomain, which: str, tol: float = DEFAULT_TOL, **kw) -> SpectralResult:
    """``which`` in {"nu", "eta"}."""
    if which == "nu":
        return nu_of(d, tol, **kw)
    if which == "eta":
        return eta_of(d, tol, **kw)
    raise ValueError(f"unknown objective {which!r}")


def rayleigh_quotient(B: FaceField, plan: BSKernelPlan | None = None) -> float:
    """``M(B) / H(B)``; only defined for positive helicity."""
    H = helicity(B, plan)
    if not H > 0:
        raise DomainError(f"Rayleigh quotient needs positive helicity, got {H:.3e}")
    return magnetic_energy(B) / H
