"""
Per-level descriptor containers.

Level 1 is the largest radius (high level), level L the smallest.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from cloud import ParameterError

logger = logging.getLogger("gcreg.descriptors")


@dataclass(frozen=True, eq=False)
class DescriptorSet:
    """
    One descriptor vector per cloud point at a single level.

    Attributes:
        level: 1-based level number
        vectors: (N, D) array, index-aligned with the cloud
        radius: support radius the descriptors were computed at, if any
        empty: (N,) bool mask of points whose neighborhood was empty
    """
    level: int
    vectors: np.ndarray
    radius: Optional[float] = None
    empty: Optional[np.ndarray] = None

    def __post_init__(self):
        vectors = np.array(self.vectors, dtype=np.float64, copy=True)
        if vectors.ndim != 2 or vectors.shape[1] == 0:
            raise ParameterError(f"descriptor vectors must be (N, D) with D > 0, got {vectors.shape}")
        if not np.all(np.isfinite(vectors)):
            raise ParameterError(f"level {self.level} descriptors contain non-finite values")
        if self.level < 1:
            raise ParameterError(f"level must be >= 1, got {self.level}")
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)

        mask = np.zeros(vectors.shape[0], dtype=bool) if self.empty is None else np.array(self.empty, dtype=bool)
        if mask.shape != (vectors.shape[0],):
            raise ParameterError("empty mask does not match descriptor count")
        mask.setflags(write=False)
        object.__setattr__(self, "empty", mask)

    def __len__(self) -> int:
        return int(self.vectors.shape[0])

    @property
    def dimension(self) -> int:
        return int(self.vectors.shape[1])

    def subset(self, indices: Sequence[int]) -> "DescriptorSet":
        idx = np.asarray(indices, dtype=np.int64)
        return DescriptorSet(self.level, self.vectors[idx], self.radius, self.empty[idx])


@dataclass(frozen=True, eq=False)
class MultiScaleDescriptors:
    """Ordered DescriptorSets, level 1 first. Radii strictly decrease when known."""
    levels: List[DescriptorSet]

    def __post_init__(self):
        levels = list(self.levels)
        if not levels:
            raise ParameterError("MultiScaleDescriptors needs at least one level")
        counts = {len(s) for s in levels}
        if len(counts) != 1:
            raise ParameterError(f"levels cover different point counts: {sorted(counts)}")
        for position, s in enumerate(levels, start=1):
            if s.level != position:
                raise ParameterError(f"level {position} is labelled {s.level}")
        radii = [s.radius for s in levels]
        if all(r is not None for r in radii):
            for hi, lo in zip(radii, radii[1:]):
                if not lo < hi:
                    raise ParameterError(f"radii must strictly decrease, got {radii}")
        object.__setattr__(self, "levels", levels)

    def __len__(self) -> int:
        return len(self.levels)

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    @property
    def num_points(self) -> int:
        return len(self.levels[0])

    @property
    def radii(self) -> List[Optional[float]]:
        return [s.radius for s in self.levels]

    def level(self, l: int) -> DescriptorSet:
        """1-based access."""
        if not 1 <= l <= len(self.levels):
            raise ParameterError(f"level {l} out of range 1..{len(self.levels)}")
        return self.levels[l - 1]

    def first(self, count: int) -> "MultiScaleDescriptors":
        """Keep only the top `count` levels."""
        return MultiScaleDescriptors(self.levels[:count])

    def subset(self, indices: Sequence[int]) -> "MultiScaleDescriptors":
        return MultiScaleDescriptors([s.subset(indices) for s in self.levels])
