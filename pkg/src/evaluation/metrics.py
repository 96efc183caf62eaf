"""
GC-Register Metrics
===================

Registration evaluation quantities:
- IR   inlier ratio of a correspondence set under the ground truth
- FMR  feature matching recall over pairs
- RR   registration recall (rmse mode or rre/rte mode)
- RRE  relative rotation error, degrees
- RTE  relative translation error
- RMSE of the aligned source against ground truth

Conventions are collected in settings.METRIC_CONVENTIONS and written into
every report header.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from cloud import ParameterError, PointCloud, RigidTransform, build_index
from settings import EVAL_CONFIG

logger = logging.getLogger("gcreg.metrics")


class UndefinedMetricError(ValueError):
    """Raised when a metric has no defined value for the given input."""
    pass


class RecallMode(Enum):
    """How a single registration is judged successful."""
    RMSE = "rmse"
    RRE_RTE = "rre_rte"


@dataclass(frozen=True)
class EvalThresholds:
    """Evaluation thresholds; every field must be strictly positive."""
    inlier_dist: float = EVAL_CONFIG['inlier_dist']
    fmr_min_ir: float = EVAL_CONFIG['fmr_min_ir']
    rr_rmse: float = EVAL_CONFIG['rr_rmse']
    rr_rre: float = EVAL_CONFIG['rr_rre']
    rr_rte: float = EVAL_CONFIG['rr_rte']

    def __post_init__(self):
        for name in ("inlier_dist", "fmr_min_ir", "rr_rmse", "rr_rre", "rr_rte"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ParameterError(f"threshold {name} must be a positive number, got {value!r}")

    def to_dict(self) -> dict:
        return {
            "inlier_dist": self.inlier_dist,
            "fmr_min_ir": self.fmr_min_ir,
            "rr_rmse": self.rr_rmse,
            "rr_rre": self.rr_rre,
            "rr_rte": self.rr_rte,
        }


# =============================================================================
# CORRESPONDENCE QUALITY
# =============================================================================

def inlier_mask(src, dst, gt: RigidTransform, inlier_dist: float) -> np.ndarray:
    """Per-pair |gt(x) - y| < inlier_dist."""
    src = np.asarray(src, dtype=np.float64).reshape(-1, 3)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 3)
    return np.linalg.norm(gt.apply(src) - dst, axis=1) < inlier_dist


def inlier_ratio(src, dst, gt: RigidTransform, inlier_dist: Optional[float] = None) -> float:
    """
    Fraction of correspondences (src[k], dst[k]) with |gt(src[k]) - dst[k]| < inlier_dist.

    An empty correspondence list gives 0.0 and a warning.
    """
    dist = EVAL_CONFIG['inlier_dist'] if inlier_dist is None else inlier_dist
    mask = inlier_mask(src, dst, gt, dist)
    if mask.size == 0:
        logger.warning("inlier_ratio of an empty correspondence list; reporting 0")
        return 0.0
    return float(np.count_nonzero(mask)) / mask.size


def feature_matching_recall(per_pair_irs: Sequence[float], fmr_min_ir: Optional[float] = None) -> float:
    """Fraction of pairs whose IR is strictly above fmr_min_ir."""
    threshold = EVAL_CONFIG['fmr_min_ir'] if fmr_min_ir is None else fmr_min_ir
    irs = np.asarray(list(per_pair_irs), dtype=np.float64)
    if irs.size == 0:
        raise UndefinedMetricError("feature_matching_recall needs at least one pair")
    return float(np.count_nonzero(irs > threshold)) / irs.size


# =============================================================================
# POSE ERRORS
# =============================================================================

def rre(est: RigidTransform, gt: RigidTransform) -> float:
    """
    Geodesic angle between the two rotations, in degrees, in [0, 180].

    Evaluated as atan2(sin, cos) of the relative rotation, which equals
    arccos((trace - 1) / 2) and stays accurate for small angles.
    """
    rd = gt.rotation.T @ est.rotation
    skew = rd - rd.T
    sin = 0.5 * math.sqrt(skew[2, 1] ** 2 + skew[0, 2] ** 2 + skew[1, 0] ** 2)
    cos = 0.5 * (np.trace(rd) - 1.0)
    return math.degrees(math.atan2(sin, cos))


def rte(est: RigidTransform, gt: RigidTransform) -> float:
    """|t_est - t_gt|."""
    return float(np.linalg.norm(est.translation - gt.translation))


def registration_rmse(
    src: PointCloud,
    target: PointCloud,
    est: RigidTransform,
    gt_corr: Iterable[Tuple[int, int]],
) -> float:
    """
    RMSE of |est(x_i) - y_j| over ground-truth index pairs (i, j).

    Raises:
        UndefinedMetricError: no pairs
    """
    pairs = np.asarray(list(gt_corr), dtype=np.int64).reshape(-1, 2)
    if pairs.shape[0] == 0:
        raise UndefinedMetricError("registration_rmse needs at least one ground-truth pair")
    residual = est.apply(src.points[pairs[:, 0]]) - target.points[pairs[:, 1]]
    return float(np.sqrt(np.mean(np.sum(residual ** 2, axis=1))))


def transform_rmse(points, est: RigidTransform, gt: RigidTransform) -> float:
    """
    RMSE of |est(x) - gt(x)| over a point set.

    Raises:
        UndefinedMetricError: empty point set
    """
    pts = np.asarray(points.points if isinstance(points, PointCloud) else points, dtype=np.float64)
    pts = pts.reshape(-1, 3)
    if pts.shape[0] == 0:
        raise UndefinedMetricError("transform_rmse needs at least one point")
    residual = est.apply(pts) - gt.apply(pts)
    return float(np.sqrt(np.mean(np.sum(residual ** 2, axis=1))))


def overlap_ratio(source: PointCloud, target: PointCloud, gt: RigidTransform, threshold: float) -> float:
    """Fraction of source points whose gt image has a target point closer than threshold."""
    if not threshold > 0:
        raise ParameterError(f"threshold must be positive, got {threshold}")
    source.require_non_empty("source")
    _, dist = build_index(target).nearest_many(gt.apply(source.points))
    return float(np.count_nonzero(dist < threshold)) / len(source)


# =============================================================================
# RECALL
# =============================================================================

def is_success(report, thresholds: EvalThresholds, mode: RecallMode) -> bool:
    """Whether one report counts as a successful registration."""
    mode = RecallMode(mode)
    if report.status != "ok":
        return False
    if mode is RecallMode.RMSE:
        return report.rmse is not None and report.rmse < thresholds.rr_rmse
    return (
        report.rre is not None and report.rte is not None
        and report.rre < thresholds.rr_rre and report.rte < thresholds.rr_rte
    )


def registration_recall(reports: Sequence, thresholds: Optional[EvalThresholds] = None, mode="rmse") -> float:
    """
    Fraction of reports that count as successful registrations.

    Failed pairs (no transform) count as failures.

    Raises:
        UndefinedMetricError: empty report list
    """
    thresholds = EvalThresholds() if thresholds is None else thresholds
    reports = list(reports)
    if not reports:
        raise UndefinedMetricError("registration_recall needs at least one report")
    hits = sum(1 for r in reports if is_success(r, thresholds, mode))
    return hits / len(reports)
