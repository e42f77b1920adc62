"""Parametric domain descriptions.

Every variant answers point-membership queries, reports an analytic (or
quadrature) volume and an axis-aligned bounding box, and can be translated
or dilated.  Dilations are taken about the variant's own center so that
``scaled`` never moves a domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation
from scipy.special import sph_harm_y

from ..errors import InvalidSpecError

UNIT_BALL_VOLUME = 4.0 * math.pi / 3.0


def _vec3(v) -> tuple[float, float, float]:
    arr = np.asarray(v, dtype=float).reshape(-1)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise InvalidSpecError(f"expected a finite 3-vector, got {v!r}")
    return (float(arr[0]), float(arr[1]), float(arr[2]))


def fibonacci_sphere(n: int) -> np.ndarray:
    """Nearly uniform unit vectors, shape (n, 3)."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    rho = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    phi = math.pi * (1.0 + math.sqrt(5.0)) * i
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)


@dataclass(frozen=True)
class Ball:
    center: tuple[float, float, float]
    radius: float
    kind = "ball"

    def __post_init__(self):
        object.__setattr__(self, "center", _vec3(self.center))
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise InvalidSpecError(f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "radius", float(self.radius))

    def contains(self, pts: np.ndarray) -> np.ndarray:
        d = np.asarray(pts, dtype=float) - np.asarray(self.center)
        return np.einsum("...i,...i->...", d, d) < self.radius**2

    def volume(self) -> float:
        return UNIT_BALL_VOLUME * self.radius**3

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.center)
        return c - self.radius, c + self.radius

    def translated(self, shift) -> "Ball":
        return Ball(tuple(np.asarray(self.center) + np.asarray(shift, dtype=float)), self.radius)

    def scaled(self, s: float) -> "Ball":
        return Ball(self.center, self.radius * s)

    def surface_points(self, n: int = 4000) -> np.ndarray:
        return np.asarray(self.center) + self.radius * fibonacci_sphere(n)


@dataclass(frozen=True)
class Ellipsoid:
    """Ellipsoid with semi-axes ``a >= b >= c`` along the rotated x, y, z axes.

    ``rotation`` is a rotation vector (axis times angle, radians).
    """

    center: tuple[float, float, float]
    semi_axes: tuple[float, float, float]
    rotation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    kind = "ellipsoid"

    def __post_init__(self):
        object.__setattr__(self, "center", _vec3(self.center))
        object.__setattr__(self, "rotation", _vec3(self.rotation))
        axes = _vec3(self.semi_axes)
        if min(axes) <= 0:
            raise InvalidSpecError(f"semi-axes must be positive, got {axes}")
        if not (axes[0] >= axes[1] >= axes[2]):
            raise InvalidSpecError(f"semi-axes must satisfy a >= b >= c, got {axes}")
        object.__setattr__(self, "semi_axes", axes)

    @property
    def _rot(self) -> Rotation:
        return Rotation.from_rotvec(self.rotation)

    def contains(self, pts: np.ndarray) -> np.ndarray:
        d = np.asarray(pts, dtype=float) - np.asarray(self.center)
        shape = d.shape
        local = self._rot.inv().apply(d.reshape(-1, 3)).reshape(shape)
        q = np.sum((local / np.asarray(self.semi_axes)) ** 2, axis=-1)
        return q < 1.0

    def volume(self) -> float:
        a, b, c = self.semi_axes
        return UNIT_BALL_VOLUME * a * b * c

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        m = self._rot.as_matrix()
        ext = np.sqrt((m**2) @ (np.asarray(self.semi_axes) ** 2))
        c = np.asarray(self.center)
        return c - ext, c + ext

    def translated(self, shift) -> "Ellipsoid":
        return Ellipsoid(tuple(np.asarray(self.center) + np.asarray(shift, dtype=float)),
                         self.semi_axes, self.rotation)

    def scaled(self, s: float) -> "Ellipsoid":
        return Ellipsoid(self.center, tuple(s * x for x in self.semi_axes), self.rotation)

    def min_curvature_radius(self) -> float:
        a, b, c = self.semi_axes
        return c * c / a

    def surface_points(self, n: int = 4000) -> np.ndarray:
        u = fibonacci_sphere(n) * np.asarray(self.semi_axes)
        return np.asarray(self.center) + self._rot.apply(u)


@dataclass(frozen=True)
class Torus:
    """Solid torus about the z axis through ``center``."""

    center: tuple[float, float, float]
    major: float
    minor: float
    kind = "torus"

    def __post_init__(self):
        object.__setattr__(self, "center", _vec3(self.center))
        if not (self.minor > 0 and self.major > 0):
            raise InvalidSpecError("torus radii must be positive")
        if not self.minor < self.major:
            raise InvalidSpecError(f"torus needs minor < major, got {self.minor} >= {self.major}")
        object.__setattr__(self, "major", float(self.major))
        object.__setattr__(self, "minor", float(self.minor))

    def contains(self, pts: np.ndarray) -> np.ndarray:
        d = np.asarray(pts, dtype=float) - np.asarray(self.center)
        rho = np.hypot(d[..., 0], d[..., 1])
        return (rho - self.major) ** 2 + d[..., 2] ** 2 < self.minor**2

    def volume(self) -> float:
        return 2.0 * math.pi**2 * self.major * self.minor**2

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.center)
        e = np.array([self.major + self.minor, self.major + self.minor, self.minor])
        return c - e, c + e

    def translated(self, shift) -> "Torus":
        return Torus(tuple(np.asarray(self.center) + np.asarray(shift, dtype=float)),
                     self.major, self.minor)

    def scaled(self, s: float) -> "Torus":
        return Torus(self.center, self.major * s, self.minor * s)

    def surface_points(self, n: int = 4000) -> np.ndarray:
        k = max(8, int(math.sqrt(n * self.minor / self.major)))
        m = max(8, n // k)
        u, v = np.meshgrid(np.linspace(0, 2 * math.pi, m, endpoint=False),
                           np.linspace(0, 2 * math.pi, k, endpoint=False), indexing="ij")
        rho = self.major + self.minor * np.cos(v)
        pts = np.stack([rho * np.cos(u), rho * np.sin(u), self.minor * np.sin(v)], axis=-1)
        return np.asarray(self.center) + pts.reshape(-1, 3)


def real_sph_harm(l: int, m: int, theta, phi):
    """Real orthonormal spherical harmonic; ``theta`` polar, ``phi`` azimuth."""
    y = sph_harm_y(l, abs(m), theta, phi)
    if m > 0:
        return math.sqrt(2.0) * (-1) ** m * y.real
    if m < 0:
        return math.sqrt(2.0) * (-1) ** m * y.imag
    return y.real


@dataclass(frozen=True)
class StarShaped:
    """Radial graph ``r(theta, phi) = base * (1 + sum c_lm Y_lm)`` about ``center``."""

    center: tuple[float, float, float]
    base_radius: float
    coefficients: tuple[tuple[int, int, float], ...] = ()
    kind = "star"

    def __post_init__(self):
        object.__setattr__(self, "center", _vec3(self.center))
        if not self.base_radius > 0:
            raise InvalidSpecError("base radius must be positive")
        coeffs = []
        for entry in self.coefficients:
            l, m, val = entry
            l, m = int(l), int(m)
            if l < 0 or abs(m) > l:
                raise InvalidSpecError(f"invalid harmonic index (l={l}, m={m})")
            coeffs.append((l, m, float(val)))
        object.__setattr__(self, "coefficients", tuple(coeffs))
        object.__setattr__(self, "base_radius", float(self.base_radius))
        dirs = fibonacci_sphere(6000)
        if np.min(self._radius_along(dirs)) <= 0:
            raise InvalidSpecError("star-shaped radial function must stay positive")

    @property
    def degree(self) -> int:
        return max((l for l, _, _ in self.coefficients), default=0)

    def radius_at(self, theta, phi):
        theta = np.asarray(theta, dtype=float)
        phi = np.asarray(phi, dtype=float)
        pert = np.zeros(np.broadcast(theta, phi).shape)
        for l, m, val in self.coefficients:
            pert = pert + val * real_sph_harm(l, m, theta, phi)
        return self.base_radius * (1.0 + pert)

    def _radius_along(self, d: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(d, axis=-1)
        safe = np.where(r > 0, r, 1.0)
        theta = np.arccos(np.clip(d[..., 2] / safe, -1.0, 1.0))
        phi = np.arctan2(d[..., 1], d[..., 0])
        return self.radius_at(theta, phi)

    def contains(self, pts: np.ndarray) -> np.ndarray:
        d = np.asarray(pts, dtype=float) - np.asarray(self.center)
        r = np.linalg.norm(d, axis=-1)
        return r < self._radius_along(d)

    def volume(self) -> float:
        # Gauss-Legendre in cos(theta), trapezoid in phi: exact for the
        # band-limited cube of the radial function at this order.
        n = 4 * (self.degree + 4)
        x, w = np.polynomial.legendre.leggauss(n)
        phi = np.linspace(0, 2 * math.pi, 2 * n, endpoint=False)
        th, ph = np.meshgrid(np.arccos(x), phi, indexing="ij")
        r = self.radius_at(th, ph)
        return float(np.sum(w[:, None] * r**3 / 3.0) * (2 * math.pi / (2 * n)))

    def max_radius(self) -> float:
        return float(np.max(self._radius_along(fibonacci_sphere(20000))))

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.center)
        r = self.max_radius() * 1.02
        return c - r, c + r

    def translated(self, shift) -> "StarShaped":
        return StarShaped(tuple(np.asarray(self.center) + np.asarray(shift, dtype=float)),
                          self.base_radius, self.coefficients)

    def scaled(self, s: float) -> "StarShaped":
        return StarShaped(self.center, self.base_radius * s, self.coefficients)

    def surface_points(self, n: int = 4000) -> np.ndarray:
        d = fibonacci_sphere(n)
        return np.asarray(self.center) + d * self._radius_along(d)[:, None]


@dataclass(frozen=True)
class Union:
    """Finite union of members with pairwise-disjoint closures."""

    members: tuple = field(default_factory=tuple)
    kind = "union"

    def __post_init__(self):
        members = tuple(self.members)
        if len(members) < 1:
            raise InvalidSpecError("union needs at least one member")
        object.__setattr__(self, "members", members)
        for i in range(len(members)):
            for j in range(i + 1, len(members)):
                if closure_gap(members[i], members[j]) <= 0:
                    raise InvalidSpecError(f"union members {i} and {j} have intersecting closures")

    def contains(self, pts: np.ndarray) -> np.ndarray:
        out = self.members[0].contains(pts)
        for m in self.members[1:]:
            out = out | m.contains(pts)
        return out

    def volume(self) -> float:
        return float(sum(m.volume() for m in self.members))

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.min([m.bbox()[0] for m in self.members], axis=0)
        hi = np.max([m.bbox()[1] for m in self.members], axis=0)
        return lo, hi

    def translated(self, shift) -> "Union":
        return Union(tuple(m.translated(shift) for m in self.members))

    def scaled(self, s: float) -> "Union":
        """Dilate the whole configuration about the origin."""
        out = []
        for m in self.members:
            c = np.asarray(m.center)
            out.append(m.scaled(s).translated((s - 1.0) * c))
        return Union(tuple(out))

    def surface_points(self, n: int = 4000) -> np.ndarray:
        return np.concatenate([m.surface_points(n) for m in self.members])


DomainSpec = (Ball, Ellipsoid, Torus, StarShaped, Union)


def closure_gap(a, b, n: int = 6000) -> float:
    """Estimated distance between the closures of two specs (<= 0 if they meet)."""
    pa, pb = a.surface_points(n), b.surface_points(n)
    if np.any(b.contains(pa)) or np.any(a.contains(pb)):
        return -1.0
    d, _ = cKDTree(pb).query(pa)
    # Surface sampling resolution bounds the error of the point-cloud distance.
    spacing = max(_sample_spacing(pa), _sample_spacing(pb))
    return float(np.min(d) - spacing)


def _sample_spacing(pts: np.ndarray) -> float:
    d, _ = cKDTree(pts).query(pts, k=2)
    return float(np.max(d[:, 1]))


def spec_center(spec) -> np.ndarray:
    if isinstance(spec, Union):
        vols = np.array([m.volume() for m in spec.members])
        cs = np.array([m.center for m in spec.members])
        return (vols[:, None] * cs).sum(axis=0) / vols.sum()
    return np.asarray(spec.center, dtype=float)


def translate(spec, shift: Sequence[float]):
    return spec.translated(shift)
