"""Seeded point sampling ahead of matching."""

import logging
from typing import Optional, Sequence

import numpy as np

from cloud import ParameterError, PointCloud

logger = logging.getLogger("gcreg.sampling")


def sample_points(
    cloud: PointCloud,
    count: int,
    seed: int,
    weights: Optional[Sequence[float]] = None,
) -> np.ndarray:
    """
    Pick min(count, len(cloud)) distinct point indices, sorted ascending.

    Uniform by default. Per-point weights (for example predicted overlap
    scores) make the draw proportional to weight, still without
    replacement.

    Raises:
        ParameterError: count < 1, or weights of the wrong length / negative
            / all zero
    """
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    n = len(cloud)
    if count >= n:
        return np.arange(n, dtype=np.int64)

    p = None
    if weights is not None:
        w = np.asarray(weights, dtype=np.float64).reshape(-1)
        if w.shape != (n,) or np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ParameterError("weights must be finite, non-negative, one per point")
        if np.count_nonzero(w) < count:
            raise ParameterError(f"only {np.count_nonzero(w)} points have non-zero weight, need {count}")
        p = w / w.sum()

    rng = np.random.default_rng(seed)
    picked = rng.choice(n, size=count, replace=False, p=p)
    return np.sort(picked).astype(np.int64)
