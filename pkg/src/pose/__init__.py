"""
GC-Register Pose
================

Rigid pose from correspondences:
- Weighted Kabsch closed form
- Seeded, batched RANSAC
- Single re-selection + refit pass
- Nearest-neighbor consensus polish on the full clouds
"""

from .kabsch import (
    DegenerateInputError,
    kabsch,
)

from .ransac import (
    NoConsensusError,
    PoseResult,
    RansacConfig,
    polish,
    ransac,
    refine,
)

__all__ = [
    # Closed form
    "DegenerateInputError",
    "kabsch",

    # Robust estimation
    "NoConsensusError",
    "PoseResult",
    "RansacConfig",
    "polish",
    "ransac",
    "refine",
]
