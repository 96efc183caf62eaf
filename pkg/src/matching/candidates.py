"""
Feature-space nearest-neighbor matching, one column per descriptor level.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from cloud import ParameterError, SpatialIndex
from features import DescriptorSet, MultiScaleDescriptors

logger = logging.getLogger("gcreg.matching")


@dataclass(frozen=True, eq=False)
class CandidateTable:
    """
    Per-level nearest target for each queried source point.

    Attributes:
        indices: (M, L) target indices; column l-1 holds level l
        distances: (M, L) feature-space distances
        source_indices: (M,) source point index of each row
    """
    indices: np.ndarray
    distances: np.ndarray
    source_indices: np.ndarray

    def __post_init__(self):
        indices = np.array(self.indices, dtype=np.int64)
        distances = np.array(self.distances, dtype=np.float64)
        sources = np.array(self.source_indices, dtype=np.int64).reshape(-1)
        if indices.ndim != 2 or indices.shape != distances.shape or indices.shape[0] != sources.shape[0]:
            raise ParameterError(
                f"inconsistent candidate table shapes {indices.shape} / {distances.shape} / {sources.shape}"
            )
        for name, arr in (("indices", indices), ("distances", distances), ("source_indices", sources)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def num_levels(self) -> int:
        return int(self.indices.shape[1])

    def __len__(self) -> int:
        return int(self.indices.shape[0])

    def column(self, level: int) -> np.ndarray:
        """Target indices for a 1-based level."""
        return self.indices[:, level - 1]


def match_level(
    source_desc: DescriptorSet,
    target_desc: DescriptorSet,
    source_indices: Optional[Sequence[int]] = None,
    index: Optional[SpatialIndex] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Exact nearest target descriptor for each source descriptor.

    Ties go to the smallest target index.

    Args:
        source_desc: Query descriptors
        target_desc: Descriptors searched over
        source_indices: Restrict queries to these rows of source_desc
        index: Prebuilt index over target_desc.vectors

    Returns:
        (target indices, feature distances)

    Raises:
        ParameterError: dimension mismatch
    """
    if source_desc.dimension != target_desc.dimension:
        raise ParameterError(
            f"descriptor dimensions differ: {source_desc.dimension} vs {target_desc.dimension}"
        )
    queries = source_desc.vectors
    if source_indices is not None:
        queries = queries[np.asarray(source_indices, dtype=np.int64)]
    index = SpatialIndex(target_desc.vectors) if index is None else index
    return index.nearest_many(queries)


def build_candidates(
    source: MultiScaleDescriptors,
    target: MultiScaleDescriptors,
    source_indices: Optional[Sequence[int]] = None,
) -> CandidateTable:
    """
    Run match_level at every level.

    Raises:
        ParameterError: level counts or per-level dimensions differ
    """
    if source.num_levels != target.num_levels:
        raise ParameterError(f"level count mismatch: {source.num_levels} vs {target.num_levels}")

    rows = (np.arange(source.num_points, dtype=np.int64) if source_indices is None
            else np.asarray(source_indices, dtype=np.int64))
    indices = np.empty((rows.size, source.num_levels), dtype=np.int64)
    distances = np.empty((rows.size, source.num_levels))
    for col, (s, t) in enumerate(zip(source.levels, target.levels)):
        indices[:, col], distances[:, col] = match_level(s, t, rows)

    logger.debug(f"Built candidate table {indices.shape} over {target.num_points} targets")
    return CandidateTable(indices, distances, rows)
