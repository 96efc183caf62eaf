"""
RegistrationReport: the per-pair output record.

JSON carries everything, timings included. The CSV row carries a fixed,
ordered column set without timings, formatted so identical runs give
byte-identical files.
"""

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

from cloud import RigidTransform

# Fixed CSV layout; append-only between schema versions
CSV_COLUMNS = [
    "pair_id",
    "status",
    "failure_stage",
    "num_source",
    "num_target",
    "proposed",
    "accepted",
    "inliers",
    "ir",
    "ir_level1",
    "overlap",
    "rre",
    "rte",
    "rmse",
    "success_rmse",
    "success_rre_rte",
    "ransac_iterations",
]

TIMING_STAGES = ("preprocess", "descriptors", "matching", "voting", "ransac", "refine", "metrics", "total")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return format(value, ".17g") if math.isfinite(value) else str(value)
    return str(value)


@dataclass
class RegistrationReport:
    """
    Everything known about one registered pair.

    transform is the estimate as 16 row-major numbers (None when the pair
    failed before pose estimation). Metric fields needing ground truth are
    None when no ground truth was supplied.
    """
    pair_id: str
    status: str = "ok"                       # ok | failed
    failure_stage: Optional[str] = None
    error: Optional[str] = None
    transform: Optional[List[float]] = None

    num_source: int = 0                      # points after downsampling
    num_target: int = 0
    proposed: int = 0                        # sampled source points queried
    accepted: int = 0                        # correspondences after filtering
    inliers: int = 0                         # RANSAC consensus size
    ransac_iterations: int = 0
    level_accepted: List[int] = field(default_factory=list)

    ir: Optional[float] = None               # IR of the filtered set
    ir_level1: Optional[float] = None        # IR of plain level-1 matching
    level_ir: List[Optional[float]] = field(default_factory=list)
    overlap: Optional[float] = None

    rre: Optional[float] = None
    rte: Optional[float] = None
    rmse: Optional[float] = None
    success_rmse: Optional[bool] = None
    success_rre_rte: Optional[bool] = None

    timings: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.ir is not None and not 0.0 <= self.ir <= 1.0:
            raise ValueError(f"ir out of [0, 1]: {self.ir}")
        for name in ("rre", "rte", "rmse"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ValueError(f"{name} must be >= 0, got {value}")

    @property
    def estimate(self) -> Optional[RigidTransform]:
        if self.transform is None:
            return None
        return RigidTransform.from_matrix(self.transform)

    def mark_failed(self, stage: str, error: BaseException):
        self.status = "failed"
        self.failure_stage = stage
        self.error = f"{type(error).__name__}: {error}"

    def to_dict(self, include_timings: bool = True) -> Dict[str, Any]:
        data = asdict(self)
        if not include_timings:
            data.pop("timings")
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RegistrationReport":
        return cls(**data)

    def csv_row(self) -> List[str]:
        return [_fmt(getattr(self, column)) for column in CSV_COLUMNS]
