"""
GC-Register Point Pair Features
===============================

The raw PPF quadruple between two oriented points:
    (angle(d, n_i), angle(d, n_j), angle(n_i, n_j), |d|),  d = p_j - p_i

Angles are taken as atan2(|u x v|, u . v). That is the clamped arccos of
the normalized dot product, written in the form that stays accurate near
0 and pi. Coincident points give the all-zero quadruple.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from cloud import ParameterError, PointCloud, build_index
from settings import DESCRIPTOR_CONFIG

logger = logging.getLogger("gcreg.ppf")


@dataclass(frozen=True)
class PpfQuadruple:
    """Three angles in [0, pi] plus the pair distance."""
    angle1: float
    angle2: float
    angle3: float
    distance: float

    def as_tuple(self) -> tuple:
        return (self.angle1, self.angle2, self.angle3, self.distance)


def _angles(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    cross = np.linalg.norm(np.cross(u, v), axis=-1)
    dot = np.einsum('...i,...i->...', u, v)
    return np.arctan2(cross, dot)


def ppf_batch(p_i, n_i, p_j, n_j) -> np.ndarray:
    """
    Vectorized PPF for (M, 3) arrays of pairs.

    Returns:
        (M, 4) array of (angle1, angle2, angle3, distance)
    """
    p_i, n_i, p_j, n_j = (np.atleast_2d(np.asarray(a, dtype=np.float64)) for a in (p_i, n_i, p_j, n_j))
    d = p_j - p_i
    dist = np.linalg.norm(d, axis=-1)
    out = np.stack([_angles(d, n_i), _angles(d, n_j), _angles(n_i, n_j), dist], axis=-1)
    out[dist == 0] = 0.0
    return out


def ppf(p_i, n_i, p_j, n_j) -> PpfQuadruple:
    """
    PPF quadruple of one oriented point pair.

    Example:
        >>> ppf((0, 0, 0), (0, 0, 1), (1, 0, 0), (0, 0, 1)).as_tuple()
        (1.5707963267948966, 1.5707963267948966, 0.0, 1.0)
    """
    for name, n in (("n_i", n_i), ("n_j", n_j)):
        if abs(np.linalg.norm(n) - 1.0) > 1e-6:
            raise ParameterError(f"{name} is not unit length")
    row = ppf_batch(p_i, n_i, p_j, n_j)[0]
    return PpfQuadruple(*(float(v) for v in row))


def ppf_patch(cloud: PointCloud, k: Optional[int] = None) -> np.ndarray:
    """
    PPF of every point against its k nearest neighbors.

    This is the geometric patch a learned encoder would consume; here it is
    exposed for analysis and tests. Neighbors are ordered by distance, ties
    by index, and the point itself is left out.

    Args:
        cloud: Cloud with normals
        k: Neighbors per patch, 1 <= k < len(cloud) (default 64)

    Returns:
        (N, k, 4) array of quadruples

    Raises:
        ParameterError: missing normals or k out of range
    """
    cloud.require_normals()
    k = DESCRIPTOR_CONFIG['ppf_neighbors'] if k is None else int(k)
    n = len(cloud)
    if not 1 <= k < n:
        raise ParameterError(f"k must be in [1, {n - 1}], got {k}")

    index = build_index(cloud)
    idx, _ = index.knn_many(cloud.points, k + 1)

    # drop the center itself; if duplicates pushed it out, drop the farthest
    is_self = idx == np.arange(n)[:, None]
    drop_col = np.where(is_self.any(axis=1), np.argmax(is_self, axis=1), k)
    keep = np.ones_like(idx, dtype=bool)
    keep[np.arange(n), drop_col] = False
    neighbors = idx[keep].reshape(n, k)

    centers = np.repeat(np.arange(n), k)
    flat = neighbors.reshape(-1)
    quads = ppf_batch(cloud.points[centers], cloud.normals[centers], cloud.points[flat], cloud.normals[flat])
    return quads.reshape(n, k, 4)
