"""Independent reference values, frozen into ``frozen.json``.

Nothing here imports the package: each value comes from an elementary
computation (bisection, quadrature, differential geometry of the surface)
so the tests compare the implementation against separate arithmetic.

Run ``python3 tests/oracles/compute_oracles.py`` to regenerate.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import mpmath
import numpy as np

OUT = Path(__file__).with_name("frozen.json")


def tan_root() -> float:
    """First positive root of tan x = x by bisection on (pi, 3 pi / 2)."""
    mpmath.mp.dps = 40
    f = lambda x: mpmath.sin(x) - x * mpmath.cos(x)
    lo, hi = mpmath.pi + mpmath.mpf("1e-6"), 3 * mpmath.pi / 2 - mpmath.mpf("1e-6")
    for _ in range(200):
        mid = (lo + hi) / 2
        if f(lo) * f(mid) <= 0:
            hi = mid
        else:
            lo = mid
    return float((lo + hi) / 2)


def ellipsoid_min_curvature_radius(a: float, b: float, c: float, n: int = 721) -> float:
    """Smallest principal radius of curvature, from the first and second
    fundamental forms of the parametrization, minimized over a fine grid."""
    u = np.linspace(1e-3, math.pi - 1e-3, n)[:, None]
    v = np.linspace(0, 2 * math.pi, 2 * n)[None, :]
    su, cu, sv, cv = np.sin(u), np.cos(u), np.sin(v), np.cos(v)
    Xu = np.stack([a * cu * cv, b * cu * sv, -c * su * np.ones_like(v)])
    Xv = np.stack([-a * su * sv, b * su * cv, 0 * su * sv])
    Xuu = np.stack([-a * su * cv, -b * su * sv, -c * cu * np.ones_like(v)])
    Xuv = np.stack([-a * cu * sv, b * cu * cv, 0 * su * sv])
    Xvv = np.stack([-a * su * cv, -b * su * sv, 0 * su * sv])
    N = np.cross(Xu, Xv, axis=0)
    N /= np.linalg.norm(N, axis=0)
    E, F, G = (Xu * Xu).sum(0), (Xu * Xv).sum(0), (Xv * Xv).sum(0)
    L, M, Nn = (Xuu * N).sum(0), (Xuv * N).sum(0), (Xvv * N).sum(0)
    K = (L * Nn - M * M) / (E * G - F * F)
    H = (E * Nn - 2 * F * M + G * L) / (2 * (E * G - F * F))
    disc = np.sqrt(np.maximum(H * H - K, 0))
    kmax = np.maximum(np.abs(H + disc), np.abs(H - disc))
    return float(1.0 / kmax.max())


def uniform_ball_bs(x: np.ndarray, n_r: int = 64, n_mu: int = 256, n_phi: int = 128) -> list[float]:
    """Biot-Savart field of B = e_z on the unit ball at an interior point.

    Product rule in spherical coordinates: Gauss-Legendre in r (split at |x|,
    where the integrand is singular) and in cos(theta), trapezoid in phi.
    """
    rx = float(np.linalg.norm(x))
    rs, wr = [], []
    for lo, hi in ((0.0, rx), (rx, 1.0)):
        g, w = np.polynomial.legendre.leggauss(n_r)
        rs.append(lo + (hi - lo) * (g + 1) / 2)
        wr.append(w * (hi - lo) / 2)
    r, wr = np.concatenate(rs), np.concatenate(wr)
    mu, wmu = np.polynomial.legendre.leggauss(n_mu)
    phi = np.arange(n_phi) * 2 * math.pi / n_phi
    wphi = 2 * math.pi / n_phi
    R, MU, PH = np.meshgrid(r, mu, phi, indexing="ij")
    W = (wr[:, None, None] * wmu[None, :, None] * wphi) * R**2
    st = np.sqrt(1 - MU**2)
    y = np.stack([R * st * np.cos(PH), R * st * np.sin(PH), R * MU])
    d = x[:, None, None, None] - y
    dist3 = np.linalg.norm(d, axis=0) ** 3
    ez = np.array([0.0, 0.0, 1.0])
    cr = np.cross(ez, d, axis=0)
    return [float(np.sum(W * cr[k] / (4 * math.pi * dist3))) for k in range(3)]


def main():
    root = tan_root()
    vol = 4 * math.pi / 3
    s4 = (1 / 4) ** (1 / 3)  # Ellipsoid(4, 1, 1) rescaled to the unit-ball volume
    probes = [[0.3, 0.0, 0.0], [0.0, 0.5, 0.2], [0.4, 0.3, -0.1]]
    data = {
        "tan_root": root,
        "ball_nu": {"unit": root, "radius_0.8": root / 0.8, "radius_2": root / 2},
        "ellipsoid_min_curvature_radius": {
            "2,1,1": ellipsoid_min_curvature_radius(2, 1, 1),
            "1.5,1,1": ellipsoid_min_curvature_radius(1.5, 1, 1),
            "1.3,1,0.7": ellipsoid_min_curvature_radius(1.3, 1, 0.7),
            "4,1,1@unit_volume": ellipsoid_min_curvature_radius(4 * s4, s4, s4),
        },
        "torus_radii": {"major": 1.0, "minor": 0.4, "interior": 0.4, "exterior": 0.6},
        "uniform_ball_bs": {"points": probes, "values": [uniform_ball_bs(np.array(p)) for p in probes]},
        "unit_ball_volume": vol,
        "radial_flow_det": {"t": 0.05, "det": math.exp(3 * 0.05)},
    }
    OUT.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    print(json.dumps(data, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
