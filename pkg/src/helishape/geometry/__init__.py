"""Domain descriptions, voxelization and the geometric measurements on them."""

from .ballcond import BallConditionReport, ball_condition, uniform_radius
from .hausdorff import hausdorff, relative_hausdorff
from .io import spec_from_text, spec_to_text, voxel_from_text, voxel_to_text
from .specs import Ball, DomainSpec, Ellipsoid, StarShaped, Torus, Union, spec_center
from .voxel import (
    VoxelDomain,
    components,
    diameter,
    equal_volume_ball_radius,
    normalize_components,
    packing_volume_bound,
    rasterize,
    volume,
)

__all__ = [
    "Ball", "Ellipsoid", "Torus", "StarShaped", "Union", "DomainSpec", "spec_center",
    "VoxelDomain", "rasterize", "volume", "equal_volume_ball_radius", "diameter",
    "packing_volume_bound", "components", "normalize_components",
    "BallConditionReport", "ball_condition", "uniform_radius",
    "hausdorff", "relative_hausdorff",
    "spec_to_text", "spec_from_text", "voxel_to_text", "voxel_from_text",
]
