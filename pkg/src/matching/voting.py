"""
GC-Register Consistent Voting
=============================

Multi-level correspondence filtering.

For each source point, adjacent level pairs (1,2), (2,3), ... are checked
in order. Two candidates agree when they are the same target point or lie
within d_tol of each other. The first agreeing pair (l, l+1) accepts the
point with the level-l candidate; a point with no agreeing pair is
rejected.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from cloud import ParameterError, PointCloud
from .candidates import CandidateTable

logger = logging.getLogger("gcreg.voting")


def _readonly(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class CorrespondenceSet:
    """
    Accepted (source, target, level) triples plus rejected source indices.

    Every queried source index appears exactly once across accepted and
    rejected.
    """
    source: np.ndarray
    target: np.ndarray
    level: np.ndarray
    rejected: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        source = _readonly(self.source, np.int64)
        target = _readonly(self.target, np.int64)
        level = _readonly(self.level, np.int64)
        rejected = _readonly(self.rejected, np.int64)
        if not (source.shape == target.shape == level.shape):
            raise ParameterError("source, target and level must have equal length")
        seen = np.concatenate([source, rejected])
        if np.unique(seen).size != seen.size:
            raise ParameterError("a source index appears more than once")
        object.__setattr__(self, "source", source)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "level", level)
        object.__setattr__(self, "rejected", rejected)

    def __len__(self) -> int:
        return int(self.source.size)

    @property
    def pairs(self) -> List[Tuple[int, int, int]]:
        return [(int(i), int(j), int(l)) for i, j, l in zip(self.source, self.target, self.level)]

    @property
    def queried(self) -> np.ndarray:
        return np.sort(np.concatenate([self.source, self.rejected]))

    def level_counts(self, num_levels: int) -> List[int]:
        """Accepted pairs per producing level, levels 1..num_levels."""
        return np.bincount(self.level, minlength=num_levels + 1)[1:num_levels + 1].tolist()

    @classmethod
    def from_level(cls, table: CandidateTable, level: int = 1) -> "CorrespondenceSet":
        """Plain single-level matches: every row accepted with its level candidate."""
        if not 1 <= level <= table.num_levels:
            raise ParameterError(f"level {level} out of range 1..{table.num_levels}")
        return cls(
            table.source_indices,
            table.column(level),
            np.full(len(table), level, dtype=np.int64),
        )


def consistent_vote(candidates: CandidateTable, target_points: PointCloud, d_tol: float) -> CorrespondenceSet:
    """
    Accept each source point at the first consistent adjacent level pair.

    Args:
        candidates: Table with L >= 2 levels
        target_points: Cloud the candidate indices point into
        d_tol: Spatial agreement tolerance (0 means index equality only)

    Returns:
        CorrespondenceSet with producing levels in 1..L-1

    Raises:
        ParameterError: L < 2, d_tol < 0, or indices out of range
    """
    if candidates.num_levels < 2:
        raise ParameterError(f"voting needs at least 2 levels, got {candidates.num_levels}")
    if d_tol < 0:
        raise ParameterError(f"d_tol must be >= 0, got {d_tol}")
    idx = candidates.indices
    if idx.size and (idx.min() < 0 or idx.max() >= len(target_points)):
        raise ParameterError("candidate index out of range of target points")

    pts = target_points.points
    produced = np.zeros(len(candidates), dtype=np.int64)
    chosen = np.full(len(candidates), -1, dtype=np.int64)

    for col in range(candidates.num_levels - 1):
        a, b = idx[:, col], idx[:, col + 1]
        agree = (a == b) | (np.linalg.norm(pts[a] - pts[b], axis=1) <= d_tol)
        fresh = agree & (produced == 0)
        produced[fresh] = col + 1
        chosen[fresh] = a[fresh]

    accepted = produced > 0
    sources = candidates.source_indices
    result = CorrespondenceSet(sources[accepted], chosen[accepted], produced[accepted], sources[~accepted])
    logger.debug(
        f"Consistent vote: {len(result)}/{len(candidates)} accepted "
        f"(per level {result.level_counts(candidates.num_levels - 1)}, d_tol={d_tol:g})"
    )
    return result


def mutual_filter(forward: CorrespondenceSet, backward: CorrespondenceSet) -> CorrespondenceSet:
    """
    Keep forward pairs (i, j) whose target j maps back to i.

    `backward` maps target indices to source indices. Dropped forward
    pairs move to rejected.
    """
    back = dict(zip(backward.source.tolist(), backward.target.tolist()))
    keep = np.array(
        [back.get(j) == i for i, j in zip(forward.source.tolist(), forward.target.tolist())],
        dtype=bool,
    ).reshape(-1)
    return CorrespondenceSet(
        forward.source[keep],
        forward.target[keep],
        forward.level[keep],
        np.concatenate([forward.rejected, forward.source[~keep]]),
    )
