"""Closed-form reference fields and constants used for calibration."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import spherical_jn


def first_tan_root(tol: float = 1e-14) -> float:
    """First positive root of ``tan x = x`` (zero of j1), by bisection on (pi, 3pi/2)."""
    f = lambda x: math.sin(x) - x * math.cos(x)
    lo, hi = math.pi + 1e-9, 1.5 * math.pi - 1e-9
    flo = f(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


BALL_CURL_EIGENVALUE = first_tan_root()  # 4.493409457909064...


def _j1_over_x(s: np.ndarray) -> np.ndarray:
    small = np.abs(s) < 1e-4
    safe = np.where(small, 1.0, s)
    return np.where(small, 1.0 / 3.0 - s * s / 30.0, spherical_jn(1, safe) / safe)


def spheromak(points: np.ndarray, radius: float = 1.0, center=(0.0, 0.0, 0.0),
              amplitude: float = 1.0) -> np.ndarray:
    """Axisymmetric first curl eigenfield of a ball (``curl B = mu B``, ``B . n = 0``).

    ``mu = BALL_CURL_EIGENVALUE / radius``; returns Cartesian components, shape (n, 3).
    """
    mu = BALL_CURL_EIGENVALUE / radius
    p = np.asarray(points, dtype=float) - np.asarray(center)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    r = np.sqrt(x * x + y * y + z * z)
    rho = np.hypot(x, y)
    s = mu * r
    j1 = spherical_jn(1, s)
    jx = _j1_over_x(s)
    # d/dr [r j1(mu r)] = j1 + s j1'(s)
    dj = j1 + s * spherical_jn(1, s, derivative=True)
    safe_r = np.where(r > 0, r, 1.0)
    cos_t = np.where(r > 0, z / safe_r, 1.0)
    sin_t = np.where(r > 0, rho / safe_r, 0.0)
    safe_rho = np.where(rho > 0, rho, 1.0)
    cos_p = np.where(rho > 0, x / safe_rho, 1.0)
    sin_p = np.where(rho > 0, y / safe_rho, 0.0)
    Br = 2.0 * jx * cos_t
    # dj / s -> 2/3 at the origin, matching B_theta -> -2/3 sin(theta)
    djs = np.where(s > 1e-4, dj / np.where(s > 1e-4, s, 1.0), 2.0 / 3.0)
    Bt = -djs * sin_t
    Bp = j1 * sin_t
    Bx = Br * sin_t * cos_p + Bt * cos_t * cos_p - Bp * sin_p
    By = Br * sin_t * sin_p + Bt * cos_t * sin_p + Bp * cos_p
    Bz = Br * cos_t - Bt * sin_t
    out = amplitude * np.stack([Bx, By, Bz], axis=-1)
    out[r >= radius] = 0.0
    return out


def uniform_ball_bs(points: np.ndarray, direction=(0.0, 0.0, 1.0)) -> np.ndarray:
    """BS of a uniform field ``e`` on a ball centered at the origin, inside points.

    With ``B = e`` on the ball, ``BS(B) = -e x grad(Phi)`` where ``Phi`` is the
    Newtonian potential of the ball, ``grad Phi = -x / 3`` inside; hence
    ``BS(B)(x) = (e x x) / 3``.
    """
    e = np.asarray(direction, dtype=float)
    return np.cross(e, np.asarray(points, dtype=float)) / 3.0
