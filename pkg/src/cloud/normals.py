"""
GC-Register Normals
===================

PCA normal estimation and radius-based normal smoothing.

Normals are the unit eigenvector of the neighborhood covariance with the
smallest eigenvalue, flipped so they point toward a viewpoint. Sign matters:
every PPF/FPFH angle downstream reads it.
"""

import logging
from typing import Optional, Sequence

import numpy as np

from settings import CLOUD_CONFIG, DEGENERATE_NORMAL
from .index import build_index
from .pointcloud import ParameterError, PointCloud

logger = logging.getLogger("gcreg.normals")

# Second-largest eigenvalue below this fraction of the largest -> rank < 2
_RANK_RTOL = 1e-12


def estimate_normals(
    cloud: PointCloud,
    neighbors: Optional[int] = None,
    viewpoint: Optional[Sequence[float]] = None,
) -> PointCloud:
    """
    Estimate per-point normals from the k nearest neighbors (self included).

    Args:
        cloud: Input cloud
        neighbors: Neighborhood size, >= 3 and <= len(cloud)
        viewpoint: Normals satisfy dot(n, viewpoint - p) >= 0

    Returns:
        Same points with normals; degenerate_normals flags points whose
        neighborhood covariance has rank < 2 (those get (0, 0, 1))

    Raises:
        ParameterError: neighbors < 3 or cloud smaller than neighbors
    """
    k = CLOUD_CONFIG['normal_neighbors'] if neighbors is None else int(neighbors)
    view = np.asarray(CLOUD_CONFIG['viewpoint'] if viewpoint is None else viewpoint, dtype=np.float64)
    if k < 3:
        raise ParameterError(f"neighbors must be >= 3, got {k}")
    if len(cloud) < k:
        raise ParameterError(f"cloud has {len(cloud)} points, fewer than neighbors={k}")

    points = cloud.points
    index = build_index(cloud)
    idx, _ = index.knn_many(points, k)

    patch = points[idx]
    centered = patch - patch.mean(axis=1, keepdims=True)
    cov = np.einsum('nki,nkj->nij', centered, centered) / k

    # eigh returns ascending eigenvalues; column 0 is the normal direction
    eigvals, eigvecs = np.linalg.eigh(cov)
    normals = eigvecs[:, :, 0].copy()

    degenerate = (eigvals[:, 2] <= 0.0) | (eigvals[:, 1] <= _RANK_RTOL * eigvals[:, 2])
    normals[degenerate] = DEGENERATE_NORMAL

    flip = np.einsum('ij,ij->i', normals, view - points) < 0
    flip &= ~degenerate
    normals[flip] *= -1.0
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)

    if degenerate.any():
        logger.warning(
            f"{int(degenerate.sum())}/{len(cloud)} points have rank-deficient neighborhoods; "
            f"using fallback normal {DEGENERATE_NORMAL}"
        )
    return cloud.with_normals(normals, degenerate)


def smooth_normals(superpoints: PointCloud, source: PointCloud, radius: float) -> PointCloud:
    """
    Replace each superpoint normal by the normalized mean of the source
    normals strictly within radius.

    A superpoint with no source point in range (or whose neighbor normals
    cancel out) takes the normal of its nearest source point.

    Raises:
        ParameterError: source without normals, radius <= 0, empty input
    """
    source.require_normals("source")
    source.require_non_empty("source")
    if not radius > 0:
        raise ParameterError(f"radius must be positive, got {radius}")
    if len(superpoints) == 0:
        return superpoints.with_normals(np.zeros((0, 3)))

    index = build_index(source)
    neighborhoods = index.radius_many(superpoints.points, radius)
    nearest, _ = index.nearest_many(superpoints.points)

    smoothed = np.empty((len(superpoints), 3))
    fallback = 0
    for row, members in enumerate(neighborhoods):
        mean = source.normals[members].mean(axis=0) if members.size else np.zeros(3)
        length = np.linalg.norm(mean)
        if length <= 1e-12:
            smoothed[row] = source.normals[nearest[row]]
            fallback += 1
        else:
            smoothed[row] = mean / length

    if fallback:
        logger.debug(f"smooth_normals: {fallback} superpoints fell back to nearest-source normal")
    return superpoints.with_normals(smoothed)

