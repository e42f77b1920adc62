"""Helicity isoperimetric toolkit: Biot-Savart spectra on voxel domains.

Compute nu (energy over helicity on divergence-free tangent fields) and eta
(the zero-flux variant) on rasterized 3-D domains, check the structural
properties of these functionals, and search constrained shape classes for
low values.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .errors import HelishapeError
from .geometry import Ball, Ellipsoid, StarShaped, Torus, Union, VoxelDomain, rasterize
from .spectral import SpectralResult, eta_of, nu_of, objective

__all__ = [
    "__version__", "HelishapeError",
    "Ball", "Ellipsoid", "Torus", "StarShaped", "Union", "VoxelDomain", "rasterize",
    "SpectralResult", "nu_of", "eta_of", "objective",
]
