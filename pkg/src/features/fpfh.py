"""
GC-Register FPFH
================

Fast Point Feature Histograms at one or several support radii.

Pair features follow the Darboux-frame formulation used by PCL and Open3D
(f1 = alpha, f2 = phi, f3 = theta), with the source/target roles swapped
so the frame is built on the point whose normal is more aligned with the
connecting line. Each angular feature gets `bins` bins; the pair distance
only enters through the 1/distance weighting of the second pass.

    SPFH(p)  = histogram of the pair features (p, q) over q in N(p),
               each pair adding 100/|N(p)|
    FPFH(p)  = SPFH(p) + (1/|N(p)|) sum_q SPFH(q) / |p - q|

then every bins-wide sub-histogram is rescaled to sum to 100.
"""

import logging
from typing import Optional, Sequence

import numpy as np
from scipy import sparse

from cloud import ParameterError, PointCloud, SpatialIndex, build_index
from settings import DESCRIPTOR_CONFIG
from .descriptors import DescriptorSet, MultiScaleDescriptors

logger = logging.getLogger("gcreg.fpfh")


# =============================================================================
# PAIR FEATURES
# =============================================================================

def pair_features(p1: np.ndarray, n1: np.ndarray, p2: np.ndarray, n2: np.ndarray) -> np.ndarray:
    """
    Darboux pair features for (M, 3) arrays of oriented point pairs.

    Returns:
        (M, 3) array of (f1 in [-pi, pi], f2 in [-1, 1], f3 in [-1, 1]).
        Coincident points and pairs whose connecting line is parallel to
        the frame normal give (0, 0, 0).
    """
    dp = p2 - p1
    dist = np.linalg.norm(dp, axis=1)
    safe = np.where(dist > 0, dist, 1.0)

    a1 = np.einsum('ij,ij->i', n1, dp) / safe
    a2 = np.einsum('ij,ij->i', n2, dp) / safe

    # Build the frame on the point whose normal is closer to the line
    swap = np.abs(a1) < np.abs(a2)
    u = np.where(swap[:, None], n2, n1)
    other = np.where(swap[:, None], n1, n2)
    dp = np.where(swap[:, None], -dp, dp)
    f3 = np.where(swap, -a2, a1)

    v = np.cross(dp, u)
    v_len = np.linalg.norm(v, axis=1)
    ok = (dist > 0) & (v_len > 0)
    v = v / np.where(v_len > 0, v_len, 1.0)[:, None]
    w = np.cross(u, v)

    f2 = np.einsum('ij,ij->i', v, other)
    f1 = np.arctan2(np.einsum('ij,ij->i', w, other), np.einsum('ij,ij->i', u, other))

    out = np.stack([f1, f2, f3], axis=1)
    out[~ok] = 0.0
    return out


def bin_features(features: np.ndarray, bins: int) -> np.ndarray:
    """Map (M, 3) pair features to (M, 3) integer bin indices in [0, bins)."""
    scaled = np.empty_like(features)
    scaled[:, 0] = (features[:, 0] + np.pi) / (2.0 * np.pi)
    scaled[:, 1] = (features[:, 1] + 1.0) / 2.0
    scaled[:, 2] = (features[:, 2] + 1.0) / 2.0
    return np.clip(np.floor(bins * scaled).astype(np.int64), 0, bins - 1)


# =============================================================================
# FPFH
# =============================================================================

def fpfh(
    cloud: PointCloud,
    radius: float,
    bins: Optional[int] = None,
    level: int = 1,
    index: Optional[SpatialIndex] = None,
) -> DescriptorSet:
    """
    FPFH descriptors for every point of a cloud with normals.

    Neighbors are the points strictly within radius, excluding the point
    itself and any point coincident with it.

    Args:
        cloud: Cloud with normals
        radius: Support radius (> 0)
        bins: Bins per angular feature (>= 2); dimension is 3 * bins
        level: Level number stamped on the result
        index: Prebuilt index over cloud.points, reused across radii

    Returns:
        DescriptorSet; points with no neighbor get the zero vector and are
        flagged in `empty`

    Raises:
        ParameterError: missing normals, radius <= 0, bins < 2
    """
    cloud.require_normals()
    cloud.require_non_empty()
    bins = DESCRIPTOR_CONFIG['fpfh_bins'] if bins is None else int(bins)
    if not radius > 0:
        raise ParameterError(f"radius must be positive, got {radius}")
    if bins < 2:
        raise ParameterError(f"bins must be >= 2, got {bins}")

    n = len(cloud)
    dim = 3 * bins
    total = DESCRIPTOR_CONFIG['histogram_total']
    index = build_index(cloud) if index is None else index

    rows, cols, dists = index.radius_pairs(radius)
    counts = np.bincount(rows, minlength=n)
    empty = counts == 0

    # First pass: SPFH
    feats = pair_features(cloud.points[rows], cloud.normals[rows], cloud.points[cols], cloud.normals[cols])
    binned = bin_features(feats, bins)
    weight = total / counts[rows] if rows.size else np.zeros(0)
    spfh = np.zeros(n * dim)
    for f in range(3):
        spfh += np.bincount(rows * dim + f * bins + binned[:, f], weights=weight, minlength=n * dim)
    spfh = spfh.reshape(n, dim)

    # Second pass: 1/distance weighted neighbor aggregation
    agg = sparse.csr_matrix(
        ((1.0 / dists) / counts[rows] if rows.size else np.zeros(0), (rows, cols)),
        shape=(n, n),
    )
    hist = spfh + agg @ spfh

    sub = hist.reshape(n, 3, bins)
    sums = sub.sum(axis=2, keepdims=True)
    sub = np.divide(sub * total, sums, out=np.zeros_like(sub), where=sums > 0)
    hist = sub.reshape(n, dim)

    if empty.any():
        logger.debug(f"fpfh r={radius:g}: {int(empty.sum())}/{n} points have no neighbors")
    return DescriptorSet(level=level, vectors=hist, radius=float(radius), empty=empty)


def multiscale_fpfh(
    cloud: PointCloud,
    voxel_size: float,
    multipliers: Optional[Sequence[float]] = None,
    bins: Optional[int] = None,
) -> MultiScaleDescriptors:
    """
    One FPFH level per multiplier, radius = multiplier * voxel_size.

    Level 1 matches the first (largest) multiplier.

    Raises:
        ParameterError: multipliers empty, non-positive or not strictly
            decreasing; voxel_size <= 0
    """
    mults = list(DESCRIPTOR_CONFIG['radius_multipliers'] if multipliers is None else multipliers)
    if not voxel_size > 0:
        raise ParameterError(f"voxel_size must be positive, got {voxel_size}")
    if not mults or any(not m > 0 for m in mults):
        raise ParameterError(f"multipliers must be non-empty and positive, got {mults}")
    if any(not lo < hi for hi, lo in zip(mults, mults[1:])):
        raise ParameterError(f"multipliers must strictly decrease, got {mults}")

    index = build_index(cloud)
    levels = [
        fpfh(cloud, m * voxel_size, bins=bins, level=l, index=index)
        for l, m in enumerate(mults, start=1)
    ]
    logger.debug(f"multiscale_fpfh: {len(levels)} levels at radii {[s.radius for s in levels]}")
    return MultiScaleDescriptors(levels)
