"""
GC-Register Spatial Index
=========================

Exact nearest-neighbor and radius queries over a fixed point set.

A cKDTree does the pruning; every answer is then re-checked against
distances computed the same way a linear scan computes them, so results
are identical to brute force:
- nearest: argmin of Euclidean distance, ties -> smallest index
- radius: all indices with distance < radius (strict), ascending

The index works in any dimension, so feature-space matching reuses it.
Queries are read-only and safe from many threads at once.
"""

import logging
from typing import List, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .pointcloud import ParameterError, PointCloud

logger = logging.getLogger("gcreg.index")

# Slack used when asking the tree for candidates; answers are re-filtered
# with exact distances afterwards.
_RTOL = 1e-9
_ATOL = 1e-12


class SpatialIndex:
    """
    Exact neighbor search over an (N, D) array of points.

    Usage:
        index = build_index(cloud)
        i, d = index.nearest(query)
        hits = index.radius(query, 0.1)
    """

    def __init__(self, points: np.ndarray):
        pts = np.array(points, dtype=np.float64, copy=True)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ParameterError(f"index needs a non-empty (N, D) array, got shape {pts.shape}")
        pts.setflags(write=False)
        self._points = pts
        self._tree = cKDTree(pts)

    def __len__(self) -> int:
        return int(self._points.shape[0])

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def dimension(self) -> int:
        return int(self._points.shape[1])

    def _as_queries(self, queries) -> np.ndarray:
        q = np.asarray(queries, dtype=np.float64)
        if q.ndim == 1:
            q = q[None, :]
        if q.ndim != 2 or q.shape[1] != self.dimension:
            raise ParameterError(
                f"queries must have dimension {self.dimension}, got shape {np.shape(queries)}"
            )
        return q

    # -------------------------------------------------------------------------
    # Nearest neighbor
    # -------------------------------------------------------------------------

    def _resolve_tie(self, query: np.ndarray, approx: float) -> int:
        radius = approx * (1.0 + _RTOL) + _ATOL
        candidates = np.asarray(sorted(self._tree.query_ball_point(query, radius)), dtype=np.int64)
        if candidates.size == 0:
            # tree distance rounding pushed everything out; fall back to a scan
            candidates = np.arange(len(self), dtype=np.int64)
        dists = np.linalg.norm(self._points[candidates] - query, axis=1)
        return int(candidates[np.argmin(dists)])

    def nearest_many(self, queries) -> Tuple[np.ndarray, np.ndarray]:
        """
        Nearest stored point for each query.

        Returns:
            (indices, distances), each of length len(queries)
        """
        q = self._as_queries(queries)
        k = min(2, len(self))
        dist, idx = self._tree.query(q, k=k)
        dist = np.asarray(dist).reshape(q.shape[0], k)
        idx = np.asarray(idx).reshape(q.shape[0], k)

        best = idx[:, 0].astype(np.int64)
        if k == 2:
            ambiguous = dist[:, 1] <= dist[:, 0] * (1.0 + _RTOL) + _ATOL
            for row in np.nonzero(ambiguous)[0]:
                best[row] = self._resolve_tie(q[row], dist[row, 0])

        exact = np.linalg.norm(self._points[best] - q, axis=1)
        return best, exact

    def nearest(self, query) -> Tuple[int, float]:
        idx, dist = self.nearest_many(query)
        return int(idx[0]), float(dist[0])

    def knn_many(self, queries, k: int) -> Tuple[np.ndarray, np.ndarray]:
        """
        k nearest stored points per query, ordered by (distance, index).

        Returns:
            (indices, distances), each (len(queries), k)
        """
        q = self._as_queries(queries)
        if not 1 <= k <= len(self):
            raise ParameterError(f"k must be in [1, {len(self)}], got {k}")
        _, idx = self._tree.query(q, k=k)
        idx = np.asarray(idx, dtype=np.int64).reshape(q.shape[0], k)
        dists = np.linalg.norm(self._points[idx] - q[:, None, :], axis=2)
        order = np.lexsort((idx, dists), axis=-1)
        return np.take_along_axis(idx, order, axis=1), np.take_along_axis(dists, order, axis=1)

    # -------------------------------------------------------------------------
    # Radius queries
    # -------------------------------------------------------------------------

    def radius(self, query, radius: float) -> List[int]:
        """All indices with distance < radius, ascending."""
        return self.radius_many(query, radius)[0].tolist()

    def radius_many(self, queries, radius: float) -> List[np.ndarray]:
        """Strict radius neighbors for each query, each sorted ascending."""
        if radius < 0:
            raise ParameterError(f"radius must be >= 0, got {radius}")
        q = self._as_queries(queries)
        if radius == 0:
            return [np.zeros(0, dtype=np.int64) for _ in range(q.shape[0])]

        padded = radius * (1.0 + _RTOL) + _ATOL
        hits = self._tree.query_ball_point(q, padded)
        out = []
        for row, candidates in enumerate(hits):
            cand = np.asarray(sorted(candidates), dtype=np.int64)
            if cand.size:
                d = np.linalg.norm(self._points[cand] - q[row], axis=1)
                cand = cand[d < radius]
            out.append(cand)
        return out

    def radius_pairs(self, radius: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Every ordered pair of distinct stored points closer than radius.

        Coincident points (distance 0) are left out.

        Returns:
            (rows, cols, distances) sorted by (row, col)
        """
        if radius < 0:
            raise ParameterError(f"radius must be >= 0, got {radius}")
        empty = (np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0))
        if radius == 0 or len(self) < 2:
            return empty

        pairs = self._tree.query_pairs(radius * (1.0 + _RTOL) + _ATOL, output_type='ndarray')
        if pairs.size == 0:
            return empty
        pairs = pairs.astype(np.int64)
        d = np.linalg.norm(self._points[pairs[:, 0]] - self._points[pairs[:, 1]], axis=1)
        keep = (d < radius) & (d > 0)
        pairs, d = pairs[keep], d[keep]

        rows = np.concatenate([pairs[:, 0], pairs[:, 1]])
        cols = np.concatenate([pairs[:, 1], pairs[:, 0]])
        dists = np.concatenate([d, d])
        order = np.lexsort((cols, rows))
        return rows[order], cols[order], dists[order]


# =============================================================================
# MODULE-LEVEL OPERATIONS
# =============================================================================

def build_index(cloud: PointCloud) -> SpatialIndex:
    """
    Exact nearest-neighbor / radius index over a cloud's points.

    Raises:
        ParameterError: empty cloud
    """
    cloud.require_non_empty()
    return SpatialIndex(cloud.points)


def nearest_neighbor(index: SpatialIndex, query) -> Tuple[int, float]:
    """Index and distance of the closest stored point (ties -> smallest index)."""
    return index.nearest(query)


def radius_neighbors(index: SpatialIndex, query, radius: float) -> List[int]:
    """Indices with distance < radius, ascending."""
    return index.radius(query, radius)
