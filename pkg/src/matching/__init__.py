"""
GC-Register Matching
====================

From descriptors to filtered correspondences:
- Per-level feature nearest neighbors (CandidateTable)
- Multi-level consistent voting and the optional mutual check
- Seeded point sampling
"""

from .candidates import (
    CandidateTable,
    build_candidates,
    match_level,
)

from .voting import (
    CorrespondenceSet,
    consistent_vote,
    mutual_filter,
)

from .sampling import sample_points

__all__ = [
    # Candidates
    "CandidateTable",
    "build_candidates",
    "match_level",

    # Voting
    "CorrespondenceSet",
    "consistent_vote",
    "mutual_filter",

    # Sampling
    "sample_points",
]
