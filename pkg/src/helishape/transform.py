"""Flow maps of compactly supported fields and the transport of magnetic fields.

A generator ``X`` is a smooth vector field vanishing outside a support ball.
Its time-``t`` flow ``psi_t`` moves a domain to ``psi_t(Omega)`` and a field
``B`` on ``Omega`` to

    B_t(y) = D psi_t(x) B(x) / det D psi_t(x),   x = psi_t^{-1}(y),

which keeps fields divergence-free and tangent and preserves helicity.
Trajectories are integrated with classical RK4 together with the variational
equation ``dJ/ds = DX J``; ``log det J`` follows Liouville's formula
``d/ds log det = div X``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy import ndimage

from .errors import AccuracyError, ConstructionError, MappingError, PreconditionError
from .fieldspace import (
    DEFAULT_TOL,
    FaceField,
    evaluate,
    face_layout,
    magnetic_energy,
    project_div_free_tangent,
)
from .geometry.ballcond import boundary_cloud
from .geometry.voxel import MIN_MARGIN, VoxelDomain

log = logging.getLogger(__name__)

ACCURACY_TOL = 1e-6


# ---------------------------------------------------------------------------
# smooth cut-off


def _smoothstep_exp(s: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for s <= 0, 1 for s >= 1."""
    s = np.clip(s, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        b = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    return a / (a + b)


def _smoothstep_exp_deriv(s: np.ndarray) -> np.ndarray:
    inside = (s > 0) & (s < 1)
    out = np.zeros_like(s)
    si = s[inside]
    a = np.exp(-1.0 / si)
    b = np.exp(-1.0 / (1.0 - si))
    da = a / si**2
    db = -b / (1.0 - si) ** 2
    out[inside] = (da * (a + b) - a * (da + db)) / (a + b) ** 2
    return out


def plateau(r: np.ndarray, r_in: float, r_out: float) -> tuple[np.ndarray, np.ndarray]:
    """Bump equal to 1 on ``r <= r_in`` and 0 on ``r >= r_out``; returns value and d/dr."""
    s = (np.asarray(r, dtype=float) - r_in) / (r_out - r_in)
    return 1.0 - _smoothstep_exp(s), -_smoothstep_exp_deriv(s) / (r_out - r_in)


# ---------------------------------------------------------------------------
# generators


@dataclass(frozen=True)
class AffineGenerator:
    """``X(x) = (A (x - c) + b) * chi(|x - c|)`` with a plateau cut-off ``chi``.

    ``chi`` equals 1 on the ball of radius ``plateau_fraction * support_radius``
    and vanishes identically outside ``support_radius``.
    """

    matrix: tuple = ((0.0, 0.0, 0.0),) * 3
    vector: tuple = (0.0, 0.0, 0.0)
    support_radius: float = 10.0
    center: tuple = (0.0, 0.0, 0.0)
    plateau_fraction: float = 0.5
    kind: str = "affine"

    def __post_init__(self):
        if not self.support_radius > 0:
            raise PreconditionError("support radius must be positive")
        if not 0 < self.plateau_fraction < 1:
            raise PreconditionError("plateau fraction must lie in (0, 1)")

    @cached_property
    def _A(self) -> np.ndarray:
        return np.asarray(self.matrix, dtype=float).reshape(3, 3)

    @cached_property
    def _b(self) -> np.ndarray:
        return np.asarray(self.vector, dtype=float).reshape(3)

    def _chi(self, p):
        r = np.linalg.norm(p, axis=1)
        return plateau(r, self.plateau_fraction * self.support_radius, self.support_radius) + (r,)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        p = np.asarray(x, dtype=float) - np.asarray(self.center)
        chi, _, _ = self._chi(p)
        return (p @ self._A.T + self._b) * chi[:, None]

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        p = np.asarray(x, dtype=float) - np.asarray(self.center)
        chi, dchi, r = self._chi(p)
        v = p @ self._A.T + self._b
        safe = np.where(r > 0, r, 1.0)
        grad_chi = (dchi / safe)[:, None] * p
        return chi[:, None, None] * self._A + v[:, :, None] * grad_chi[:, None, :]

    @property
    def max_speed(self) -> float:
        return float(np.linalg.norm(self._A, 2) * self.support_radius + np.linalg.norm(self._b))

    @cached_property
    def lipschitz(self) -> float:
        r = np.linspace(0.0, self.support_radius, 400)
        pts = np.zeros((400, 3))
        pts[:, 0] = r
        pts += np.asarray(self.center)
        return float(max(np.linalg.norm(J, 2) for J in self.jacobian(pts)))


def constant_generator(vector, support_radius: float = 10.0, center=(0.0, 0.0, 0.0),
                       plateau_fraction: float = 0.5) -> AffineGenerator:
    return AffineGenerator(vector=tuple(vector), support_radius=support_radius,
                           center=tuple(center), plateau_fraction=plateau_fraction,
                           kind="constant")


def linear_generator(matrix, support_radius: float = 10.0, center=(0.0, 0.0, 0.0),
                     plateau_fraction: float = 0.5) -> AffineGenerator:
    m = tuple(tuple(float(v) for v in row) for row in np.asarray(matrix, dtype=float))
    return AffineGenerator(matrix=m, support_radius=support_radius, center=tuple(center),
                           plateau_fraction=plateau_fraction, kind="linear")


def radial_generator(support_radius: float, center=(0.0, 0.0, 0.0),
                     plateau_fraction: float = 0.5) -> AffineGenerator:
    """``X(x) = (x - c) chi``: the dilation field, cut off smoothly."""
    g = linear_generator(np.eye(3), support_radius, center, plateau_fraction)
    return replace(g, kind="radial")


@dataclass(frozen=True, eq=False)
class GridGenerator:
    """Grid-sampled field with tricubic spline interpolation (zero outside the grid).

    The samples already include the support cut-off.  ``delta`` records the
    outwardness margin when the field came from :func:`outward_field`.
    """

    origin: np.ndarray
    h: float
    values: np.ndarray  # (3, nx, ny, nz), samples at origin + (i + 1/2) h
    support_radius: float
    center: tuple = (0.0, 0.0, 0.0)
    delta: float | None = None
    delta_unit: float | None = None  # same margin for the normalized direction X/|X|
    kind: str = "grid"

    @cached_property
    def _coeffs(self) -> list[np.ndarray]:
        return [ndimage.spline_filter(v, order=3, mode="grid-constant") for v in self.values]

    def _index(self, x: np.ndarray) -> np.ndarray:
        return ((np.asarray(x, dtype=float) - self.origin) / self.h - 0.5).T

    def __call__(self, x: np.ndarray) -> np.ndarray:
        idx = self._index(x)
        return np.stack([ndimage.map_coordinates(c, idx, order=3, mode="grid-constant",
                                                 prefilter=False) for c in self._coeffs], axis=1)

    @cached_property
    def _grads(self) -> list[list[np.ndarray]]:
        return [np.gradient(v, self.h) for v in self.values]

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        # Grid derivatives, interpolated trilinearly: the field itself is
        # tricubic, its Jacobian only needs to be continuous and consistent
        # to O(h^2) for the variational and Liouville equations.
        idx = self._index(x)
        J = np.empty((idx.shape[1], 3, 3))
        for i in range(3):
            for b in range(3):
                J[:, i, b] = ndimage.map_coordinates(self._grads[i][b], idx, order=1,
                                                     mode="constant", cval=0.0)
        return J

    @cached_property
    def lipschitz(self) -> float:
        g = np.stack([np.stack(gv) for gv in self._grads])
        return float(np.max(np.sqrt(np.sum(g * g, axis=(0, 1)))))

    @cached_property
    def max_speed(self) -> float:
        return float(np.max(np.linalg.norm(self.values, axis=0)))


# ---------------------------------------------------------------------------
# flow maps


@dataclass(frozen=True)
class FlowResult:
    points: np.ndarray
    jacobian: np.ndarray | None
    det: np.ndarray


@dataclass(frozen=True, eq=False)
class FlowMap:
    """Time-``t`` flow of ``generator`` with ``steps`` RK4 steps."""

    generator: object
    t: float
    steps: int | None = None  # default: about 0.1 / Lipschitz constant per step

    def __post_init__(self):
        if self.steps is None:
            n = int(math.ceil(abs(self.t) * self.generator.lipschitz / 0.1))
            object.__setattr__(self, "steps", max(2, 2 * ((n + 1) // 2)))
        if self.steps < 1:
            raise PreconditionError("step count must be positive")

    @property
    def support_radius(self) -> float:
        return self.generator.support_radius

    def at(self, t: float) -> "FlowMap":
        return FlowMap(self.generator, t)

    def _integrate(self, x0: np.ndarray, t: float, steps: int, with_jacobian: bool) -> FlowResult:
        x = np.array(np.atleast_2d(x0), dtype=float)
        n = len(x)
        J = np.broadcast_to(np.eye(3), (n, 3, 3)).copy() if with_jacobian else None
        logdet = np.zeros(n)
        if t == 0:
            return FlowResult(x, J, np.ones(n))
        dt = t / steps
        X = self.generator

        def rhs(y, Jy):
            DX = X.jacobian(y)
            dJ = DX @ Jy if Jy is not None else None
            return X(y), dJ, np.trace(DX, axis1=1, axis2=2)

        for _ in range(steps):
            k1x, k1J, k1l = rhs(x, J)
            k2x, k2J, k2l = rhs(x + 0.5 * dt * k1x, None if J is None else J + 0.5 * dt * k1J)
            k3x, k3J, k3l = rhs(x + 0.5 * dt * k2x, None if J is None else J + 0.5 * dt * k2J)
            k4x, k4J, k4l = rhs(x + dt * k3x, None if J is None else J + dt * k3J)
            x = x + dt / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
            logdet = logdet + dt / 6 * (k1l + 2 * k2l + 2 * k3l + k4l)
            if J is not None:
                J = J + dt / 6 * (k1J + 2 * k2J + 2 * k3J + k4J)
        return FlowResult(x, J, np.exp(logdet))

    def _checked(self, x0, t, with_jacobian, check):
        res = self._integrate(x0, t, self.steps, with_jacobian)
        if check and t != 0:
            sub = np.atleast_2d(x0)[:: max(1, len(np.atleast_2d(x0)) // 256)]
            coarse = self._integrate(sub, t, max(1, self.steps // 2), False).points
            fine = self._integrate(sub, t, self.steps, False).points
            scale = max(1.0, self.support_radius)
            # Richardson: the fourth-order error of the fine result is ~1/15 of the gap
            err = float(np.max(np.abs(coarse - fine))) / (15.0 * scale)
            if err > ACCURACY_TOL:
                raise AccuracyError(f"estimated flow error {err:.2e} exceeds {ACCURACY_TOL:.0e}; "
                                    f"increase steps (now {self.steps})")
        return res

    def flow(self, x0: np.ndarray, *, check: bool = True) -> tuple[np.ndarray, np.ndarray]:
        """``(psi_t(x0), det D psi_t(x0))``."""
        r = self._checked(x0, self.t, False, check)
        return r.points, r.det

    def flow_full(self, x0: np.ndarray, *, check: bool = True) -> FlowResult:
        return self._checked(x0, self.t, True, check)

    def inverse_full(self, y: np.ndarray, *, check: bool = True) -> FlowResult:
        """``psi_t^{-1}(y)`` by integrating the flow backwards in time."""
        r = self._checked(y, -self.t, True, check)
        if not np.all(np.isfinite(r.points)) or np.any(r.det <= 0):
            raise MappingError("reverse-time integration produced an invalid inverse")
        return r

    def inverse(self, y: np.ndarray, *, check: bool = True) -> np.ndarray:
        r = self._checked(y, -self.t, False, check)
        if not np.all(np.isfinite(r.points)):
            raise MappingError("reverse-time integration produced an invalid inverse")
        return r.points

    def jacobian_fd(self, x: np.ndarray, step: float) -> np.ndarray:
        """``D psi_t`` by central differences of the flow map."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        J = np.empty((len(x), 3, 3))
        for b in range(3):
            e = np.zeros(3)
            e[b] = step
            J[:, :, b] = (self.flow(x + e, check=False)[0] - self.flow(x - e, check=False)[0]) / (2 * step)
        return J


def flow(fmap: FlowMap, x0: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return fmap.flow(x0)


# ---------------------------------------------------------------------------
# outward field


def signed_distance(d: VoxelDomain) -> np.ndarray:
    """Signed distance (positive outside) sampled at cell centers, from exact EDTs."""
    outside = ndimage.distance_transform_edt(~d.mask, sampling=d.h)
    inside = ndimage.distance_transform_edt(d.mask, sampling=d.h)
    # The boundary sits half a cell between inside and outside centers.
    return np.where(d.mask, -(inside - 0.5 * d.h), outside - 0.5 * d.h)


def outward_field(d: VoxelDomain, support_radius: float, *, center=(0.0, 0.0, 0.0),
                  mollify_cells: float = 2.0, min_delta: float = 0.1,
                  max_cells: int = 160**3) -> GridGenerator:
    """Mollified signed-distance gradient times a bump supported in the support ball.

    The bump equals 1 on the ball of radius ``support_radius / 2``, which by
    precondition contains the domain.  The achieved margin
    ``delta = min X . N`` over the reconstructed boundary is stored on the result.
    """
    c = np.asarray(center, dtype=float)
    reach = np.linalg.norm(d.inside_centers() - c, axis=1).max() + d.h
    if reach > 0.5 * support_radius:
        raise PreconditionError(f"domain reaches {reach:.3g}, beyond half the support radius")
    # grid on the domain's lattice covering the support ball
    h = d.h
    while (2 * support_radius / h + 4) ** 3 > max_cells:
        h *= 2
    lo = np.floor((c - support_radius) / h).astype(int) - 2
    n = int(np.ceil(2 * support_radius / h)) + 4
    dims = (n, n, n)
    origin = lo * h
    axes = [origin[a] + (np.arange(n) + 0.5) * h for a in range(3)]
    P = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    # membership on the sampling grid: nearest cell of the domain
    idx = np.floor((P - d.origin) / d.h).astype(int)
    ok = np.all((idx >= 0) & (idx < np.asarray(d.dims)), axis=-1)
    mask = np.zeros(dims, dtype=bool)
    mask[ok] = d.mask[tuple(idx[ok].T)]
    outside = ndimage.distance_transform_edt(~mask, sampling=h)
    inside = ndimage.distance_transform_edt(mask, sampling=h)
    sdf = np.where(mask, -(inside - 0.5 * h), outside - 0.5 * h)
    sdf = ndimage.gaussian_filter(sdf, mollify_cells * d.h / h, mode="nearest")
    grad = np.stack(np.gradient(sdf, h))
    r = np.linalg.norm(P - c, axis=-1)
    chi, _ = plateau(r, 0.5 * support_radius, support_radius)
    values = grad * chi
    gen = GridGenerator(origin, h, values, float(support_radius), tuple(c))
    cloud = boundary_cloud(d)
    Xb = gen(cloud.points)
    dots = np.einsum("ni,ni->n", Xb, cloud.normals)
    delta = float(np.min(dots))
    delta_unit = float(np.min(dots / np.maximum(np.linalg.norm(Xb, axis=1), 1e-300)))
    if delta < min_delta:
        raise ConstructionError(f"outward margin {delta:.3g} below {min_delta}")
    return replace(gen, delta=delta, delta_unit=delta_unit)


# ---------------------------------------------------------------------------
# images of domains and transported fields


def image_domain(source, fmap: FlowMap, h: float | None = None,
                 reference: VoxelDomain | None = None) -> VoxelDomain:
    """Rasterize ``psi_t(source)``: a cell is inside iff its preimage is.

    ``source`` is a DomainSpec (exact membership of the preimage) or a
    VoxelDomain (membership of the cell containing the preimage).  Only cells
    within reach of the boundary are flowed; the rest keep their membership.
    """
    from .geometry.voxel import rasterize

    if isinstance(source, VoxelDomain):
        base, spec = source, None
    else:
        spec = source
        base = reference if reference is not None else rasterize(spec, h)
    h = base.h
    reach = abs(fmap.t) * fmap.generator.max_speed
    pad = int(math.ceil(reach / h)) + 1
    mask0 = np.pad(base.mask, pad)
    origin = base.origin - pad * h
    dist_in = ndimage.distance_transform_edt(mask0, sampling=h)
    dist_out = ndimage.distance_transform_edt(~mask0, sampling=h)
    band = np.where(mask0, dist_in, dist_out) <= reach + 2 * h
    idx = np.argwhere(band)
    y = origin + (idx + 0.5) * h
    x = fmap.inverse(y)
    if spec is not None:
        inside = spec.contains(x)
    else:
        ci = np.floor((x - base.origin) / h).astype(int)
        ok = np.all((ci >= 0) & (ci < np.asarray(base.dims)), axis=1)
        inside = np.zeros(len(x), dtype=bool)
        inside[ok] = base.mask[tuple(ci[ok].T)]
    mask = mask0.copy()
    mask[tuple(idx.T)] = inside
    out = VoxelDomain(origin, h, mask)
    return out.cropped(MIN_MARGIN)


@dataclass(frozen=True, eq=False)
class PushforwardResult:
    field: FaceField  # re-projected, divergence-free tangent on the image domain
    raw: FaceField  # resampled transport before re-projection
    correction: float  # ||raw - field|| / ||raw||
    fmap: FlowMap


def pushforward(B: FaceField, fmap: FlowMap, target: VoxelDomain | None = None,
                tol: float = DEFAULT_TOL) -> PushforwardResult:
    """Transport ``B`` to ``psi_t(Omega)`` and re-project."""
    target = target if target is not None else image_domain(B.domain, fmap)
    lay = face_layout(target)
    parts = []
    for a in range(3):
        y = lay.face_centers(a)
        if not len(y):
            parts.append(np.zeros(0))
            continue
        inv = fmap.inverse_full(y, check=(a == 0))
        Bx = evaluate(B, inv.points, extend=True)
        # D psi_t(x) = (D psi_t^{-1}(y))^{-1}, det D psi_t(x) = 1 / det D psi_t^{-1}(y)
        JB = np.linalg.solve(inv.jacobian, Bx[:, :, None])[:, :, 0]
        parts.append(JB[:, a] * inv.det)
    raw = FaceField(target, np.concatenate(parts))
    proj = project_div_free_tangent(raw, tol)
    rn = raw.norm()
    corr = (raw - proj).norm() / rn if rn > 0 else 0.0
    return PushforwardResult(proj, raw, float(corr), fmap)


def pullback_covector(F, fmap: FlowMap, domain: VoxelDomain, step: float | None = None) -> FaceField:
    """``x -> (D psi_t(x))^T F(psi_t(x))`` sampled on the faces of ``domain``.

    ``F`` is a callable ``(n, 3) -> (n, 3)`` or a FaceField on the image domain.
    ``D psi_t`` comes from central differences of the flow with step ``h/4``.
    """
    Ffn = (lambda p: evaluate(F, p)) if isinstance(F, FaceField) else F
    step = step if step is not None else domain.h / 4
    lay = face_layout(domain)
    parts = []
    for a in range(3):
        x = lay.face_centers(a)
        if not len(x):
            parts.append(np.zeros(0))
            continue
        y, _ = fmap.flow(x, check=(a == 0))
        J = fmap.jacobian_fd(x, step)
        parts.append(np.einsum("ni,ni->n", J[:, :, a], np.asarray(Ffn(y))))
    return FaceField(domain, np.concatenate(parts))


# ---------------------------------------------------------------------------
# energy estimate


@dataclass(frozen=True)
class EnergyEstimateReport:
    C: float  # smallest C with M(B_t) >= M(B)(1 - C t) on the grid
    times: tuple
    energy_ratios: tuple  # M(B_t) / M(B)
    margins: tuple  # M(B_t)/M(B) - (1 - C t)

    def holds(self, C: float) -> bool:
        return all(r >= 1 - C * t - 1e-12 for r, t in zip(self.energy_ratios, self.times))


def energy_estimate_check(B: FaceField, fmap: FlowMap, times=(0.01, 0.02, 0.04),
                          source=None, project: bool = True) -> EnergyEstimateReport:
    """Fit the constant of ``M(B_t) >= M(B)(1 - C t)`` over ``times``.

    ``source`` (a DomainSpec) gives exact image domains; otherwise the voxel
    domain of ``B`` is transported.
    """
    M0 = magnetic_energy(B)
    ratios = []
    for t in times:
        ft = fmap.at(t)
        target = image_domain(source, ft, reference=B.domain) if source is not None else None
        res = pushforward(B, ft, target)
        Bt = res.field if project else res.raw
        ratios.append(magnetic_energy(Bt) / M0)
    C = max(0.0, max((1 - r) / t for r, t in zip(ratios, times)))
    margins = tuple(r - (1 - C * t) for r, t in zip(ratios, times))
    return EnergyEstimateReport(C, tuple(times), tuple(ratios), margins)


def energy_constant_bound(generator, domain: VoxelDomain, t: float) -> float:
    """A-priori constant ``max (2 |DX|_2 + div X)`` over the region swept up to time ``t``.

    Along a trajectory ``d/dt log(sigma_min(D psi)^2 / det D psi) >= -(2 |DX| + div X)``,
    so the transported energy obeys ``M(B_t) >= M(B) exp(-C t) >= M(B)(1 - C t)``
    with this ``C`` for every field ``B``.
    """
    reach = abs(t) * generator.max_speed
    pad = int(math.ceil(reach / domain.h)) + 1
    mask = np.pad(domain.mask, pad)
    dist = ndimage.distance_transform_edt(~mask, sampling=domain.h)
    idx = np.argwhere(dist <= reach + domain.h)
    pts = domain.origin - pad * domain.h + (idx + 0.5) * domain.h
    out = 0.0
    for s in range(0, len(pts), 20000):
        J = generator.jacobian(pts[s:s + 20000])
        norms = np.linalg.norm(J, ord=2, axis=(1, 2))
        out = max(out, float(np.max(2 * norms + np.trace(J, axis1=1, axis2=2))))
    return out
