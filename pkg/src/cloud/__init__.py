"""
GC-Register Cloud Core
======================

Containers and geometry primitives everything else is built on:
- PointCloud / RigidTransform containers
- Voxel downsampling
- Exact spatial index (nearest neighbor, strict radius)
- PCA normal estimation and normal smoothing
"""

from .pointcloud import (
    PointCloud,
    RigidTransform,
    ParameterError,
    apply_transform,
    nearest_rotation,
    voxel_downsample,
)

from .index import (
    SpatialIndex,
    build_index,
    nearest_neighbor,
    radius_neighbors,
)

from .normals import (
    estimate_normals,
    smooth_normals,
)

__all__ = [
    # Containers
    "PointCloud",
    "RigidTransform",
    "ParameterError",
    # Transforms
    "apply_transform",
    "nearest_rotation",
    "voxel_downsample",

    # Spatial index
    "SpatialIndex",
    "build_index",
    "nearest_neighbor",
    "radius_neighbors",

    # Normals
    "estimate_normals",
    "smooth_normals",
]
