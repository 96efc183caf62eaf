"""
Closed-form weighted rigid alignment (Kabsch / orthogonal Procrustes).
"""

import logging
from typing import Optional

import numpy as np

from cloud import ParameterError, RigidTransform

logger = logging.getLogger("gcreg.kabsch")

# Singular values of the cross-covariance below this fraction of the largest
# count as zero when judging rank.
RANK_RTOL = 1e-10


class DegenerateInputError(ValueError):
    """Raised when correspondences cannot determine a rigid transform."""

    def __init__(self, message: str, rank: Optional[int] = None):
        super().__init__(message)
        self.rank = rank


def _batched_rotation(h: np.ndarray) -> np.ndarray:
    """Rotations maximizing tr(R H) for a stack of (B, 3, 3) cross-covariances."""
    u, _, vt = np.linalg.svd(h)
    v = np.swapaxes(vt, -1, -2)
    ut = np.swapaxes(u, -1, -2)
    d = np.where(np.linalg.det(v @ ut) >= 0, 1.0, -1.0)
    fix = np.zeros(h.shape[:-2] + (3, 3))
    fix[..., 0, 0] = 1.0
    fix[..., 1, 1] = 1.0
    fix[..., 2, 2] = d
    return v @ fix @ ut


def kabsch(src, dst, weights=None) -> RigidTransform:
    """
    Weighted least-squares rigid transform taking src onto dst.

    Minimizes sum_i w_i |R src_i + t - dst_i|^2 via centroid subtraction,
    SVD of the 3x3 cross-covariance and a determinant sign fix.

    Args:
        src: (N, 3) points
        dst: (N, 3) points, paired with src by row
        weights: optional (N,) non-negative weights, not all zero

    Returns:
        RigidTransform with det(R) = +1

    Raises:
        DegenerateInputError: fewer than 3 pairs, or collinear / coincident
            configuration (rank of the cross-covariance < 2)
        ParameterError: mismatched shapes or invalid weights
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.ndim != 2 or src.shape[1] != 3 or src.shape != dst.shape:
        raise ParameterError(f"src and dst must be matching (N, 3) arrays, got {src.shape} / {dst.shape}")
    if src.shape[0] < 3:
        raise DegenerateInputError(f"need at least 3 correspondences, got {src.shape[0]}", rank=None)

    if weights is None:
        w = np.full(src.shape[0], 1.0 / src.shape[0])
    else:
        w = np.asarray(weights, dtype=np.float64).reshape(-1)
        if w.shape[0] != src.shape[0] or np.any(w < 0) or not np.all(np.isfinite(w)) or w.sum() <= 0:
            raise ParameterError("weights must be finite, non-negative, one per pair and not all zero")
        w = w / w.sum()

    src_c = w @ src
    dst_c = w @ dst
    h = ((src - src_c) * w[:, None]).T @ (dst - dst_c)

    sv = np.linalg.svd(h, compute_uv=False)
    rank = int(np.sum(sv > RANK_RTOL * sv[0])) if sv[0] > 0 else 0
    if rank < 2:
        raise DegenerateInputError(
            f"correspondences are degenerate (cross-covariance rank {rank} < 2)", rank=rank
        )

    rotation = _batched_rotation(h[None])[0]
    return RigidTransform(rotation, dst_c - rotation @ src_c)
