"""
GC-Register Pipeline
====================

One registration, start to finish:

    downsample -> normals -> smooth -> multiscale FPFH -> sample
        -> candidates -> consistent vote (-> mutual) -> RANSAC -> refine
        -> polish on the full clouds -> metrics

run_pair never raises for a stage failure. The report comes back with
status "failed", the stage name and the error text, and whatever counts
and metrics were known at that point.
"""

import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from cloud import (
    ParameterError,
    PointCloud,
    RigidTransform,
    estimate_normals,
    smooth_normals,
    voxel_downsample,
)
from evaluation import (
    EvalThresholds,
    RecallMode,
    RegistrationReport,
    inlier_ratio,
    is_success,
    overlap_ratio,
    rre,
    rte,
    transform_rmse,
)
from features import MultiScaleDescriptors, multiscale_fpfh
from matching import (
    CandidateTable,
    CorrespondenceSet,
    build_candidates,
    consistent_vote,
    mutual_filter,
    sample_points,
)
from pose import DegenerateInputError, NoConsensusError, RansacConfig, polish, ransac, refine
from settings import (
    CLOUD_CONFIG,
    DESCRIPTOR_CONFIG,
    EVAL_CONFIG,
    MATCHING_CONFIG,
    RANSAC_CONFIG,
)

logger = logging.getLogger("gcreg.pipeline")


# =============================================================================
# CONFIG
# =============================================================================

@dataclass
class PipelineConfig:
    """
    Everything run_pair needs besides the two clouds.

    Lengths are absolute (dataset units) except the *_mult fields, which
    scale voxel_size. inlier_threshold None means inlier_mult x voxel.
    """
    voxel_size: float = CLOUD_CONFIG['voxel_size']
    radius_multipliers: Tuple[float, ...] = DESCRIPTOR_CONFIG['radius_multipliers']
    fpfh_bins: int = DESCRIPTOR_CONFIG['fpfh_bins']
    normal_neighbors: int = CLOUD_CONFIG['normal_neighbors']
    viewpoint: Tuple[float, float, float] = CLOUD_CONFIG['viewpoint']
    smooth_radius_mult: float = CLOUD_CONFIG['smooth_radius_mult']

    dtol_mult: float = MATCHING_CONFIG['dtol_mult']
    sample_count: int = MATCHING_CONFIG['sample_count']
    voting: bool = MATCHING_CONFIG['voting']
    mutual: bool = MATCHING_CONFIG['mutual']
    single_scale: bool = False

    ransac_iterations: int = RANSAC_CONFIG['max_iterations']
    inlier_threshold: Optional[float] = None
    confidence: float = RANSAC_CONFIG['confidence']
    batch_size: int = RANSAC_CONFIG['batch_size']
    polish_rounds: int = RANSAC_CONFIG['polish_rounds']

    thresholds: EvalThresholds = field(default_factory=EvalThresholds)
    recall_mode: RecallMode = RecallMode(EVAL_CONFIG['rr_mode'])
    seed: int = 0

    def __post_init__(self):
        self.radius_multipliers = tuple(float(m) for m in self.radius_multipliers)
        self.viewpoint = tuple(float(v) for v in self.viewpoint)
        self.recall_mode = RecallMode(self.recall_mode)
        if not self.voxel_size > 0:
            raise ParameterError(f"voxel_size must be positive, got {self.voxel_size}")
        if not self.radius_multipliers or any(not m > 0 for m in self.radius_multipliers):
            raise ParameterError(f"radius multipliers must be positive, got {self.radius_multipliers}")
        if any(not lo < hi for hi, lo in zip(self.radius_multipliers, self.radius_multipliers[1:])):
            raise ParameterError(f"radius multipliers must strictly decrease, got {self.radius_multipliers}")
        if self.voting and not self.single_scale and len(self.radius_multipliers) < 2:
            raise ParameterError("voting needs at least 2 radius multipliers")
        if self.dtol_mult < 0:
            raise ParameterError(f"dtol_mult must be >= 0, got {self.dtol_mult}")
        if self.sample_count < 1:
            raise ParameterError(f"sample_count must be >= 1, got {self.sample_count}")
        if self.normal_neighbors < 3 or self.fpfh_bins < 1:
            raise ParameterError("normal_neighbors must be >= 3 and fpfh_bins >= 1")
        if self.polish_rounds < 0:
            raise ParameterError(f"polish_rounds must be >= 0, got {self.polish_rounds}")
        if not self.smooth_radius_mult > 0:
            raise ParameterError(f"smooth_radius_mult must be positive, got {self.smooth_radius_mult}")
        # Fails early on a bad RANSAC setup instead of once per pair
        self.ransac_config()

    @property
    def multipliers(self) -> Tuple[float, ...]:
        """Radius multipliers actually extracted (one under single_scale)."""
        return self.radius_multipliers[:1] if self.single_scale else self.radius_multipliers

    @property
    def uses_voting(self) -> bool:
        return self.voting and len(self.multipliers) >= 2

    @property
    def d_tol(self) -> float:
        return self.dtol_mult * self.voxel_size

    def ransac_config(self, seed: Optional[int] = None) -> RansacConfig:
        threshold = (RANSAC_CONFIG['inlier_mult'] * self.voxel_size
                     if self.inlier_threshold is None else self.inlier_threshold)
        return RansacConfig(
            inlier_threshold=threshold,
            max_iterations=self.ransac_iterations,
            confidence=self.confidence,
            seed=self.seed if seed is None else seed,
            batch_size=self.batch_size,
        )

    def to_dict(self) -> dict:
        return {
            "voxel_size": self.voxel_size,
            "radius_multipliers": list(self.radius_multipliers),
            "fpfh_bins": self.fpfh_bins,
            "normal_neighbors": self.normal_neighbors,
            "viewpoint": list(self.viewpoint),
            "smooth_radius_mult": self.smooth_radius_mult,
            "dtol_mult": self.dtol_mult,
            "sample_count": self.sample_count,
            "voting": self.voting,
            "mutual": self.mutual,
            "single_scale": self.single_scale,
            "ransac_iterations": self.ransac_iterations,
            "inlier_threshold": self.ransac_config().inlier_threshold,
            "confidence": self.confidence,
            "batch_size": self.batch_size,
            "polish_rounds": self.polish_rounds,
            "thresholds": self.thresholds.to_dict(),
            "recall_mode": self.recall_mode.value,
            "seed": self.seed,
        }


# =============================================================================
# STAGES
# =============================================================================

class _StageFailure(Exception):
    def __init__(self, stage: str, error: BaseException):
        super().__init__(str(error))
        self.stage = stage
        self.error = error


@contextmanager
def _stage(name: str, timings: Dict[str, float]):
    """Time a stage in milliseconds and tag any error with its name."""
    start = time.perf_counter()
    try:
        yield
    except _StageFailure:
        raise
    except Exception as e:
        raise _StageFailure(name, e) from e
    finally:
        timings[name] = timings.get(name, 0.0) + (time.perf_counter() - start) * 1000.0


def preprocess(cloud: PointCloud, config: PipelineConfig) -> PointCloud:
    """
    Downsample to superpoints with smoothed normals.

    Normals come from the full-resolution cloud (or its own normals when
    it carries them) and are averaged onto the voxel centroids.
    """
    cloud.require_non_empty()
    if cloud.has_normals:
        dense = cloud
    else:
        k = min(config.normal_neighbors, len(cloud))
        dense = estimate_normals(cloud, neighbors=k, viewpoint=config.viewpoint)
    down = voxel_downsample(cloud, config.voxel_size)
    return smooth_normals(down, dense, config.smooth_radius_mult * config.voxel_size)


def describe(cloud: PointCloud, config: PipelineConfig) -> MultiScaleDescriptors:
    return multiscale_fpfh(cloud, config.voxel_size, config.multipliers, config.fpfh_bins)


def filter_candidates(table: CandidateTable, target: PointCloud, config: PipelineConfig) -> CorrespondenceSet:
    """Consistent vote across levels, or plain level-1 matching without voting."""
    if config.uses_voting:
        return consistent_vote(table, target, config.d_tol)
    return CorrespondenceSet.from_level(table, 1)


def _mutual_check(
    forward: CorrespondenceSet,
    src: PointCloud,
    src_desc: MultiScaleDescriptors,
    tgt_desc: MultiScaleDescriptors,
    config: PipelineConfig,
) -> CorrespondenceSet:
    targets = np.unique(forward.target)
    if targets.size == 0:
        return forward
    back_table = build_candidates(tgt_desc, src_desc, targets)
    backward = filter_candidates(back_table, src, config)
    return mutual_filter(forward, backward)


def _level_irs(table: CandidateTable, src: PointCloud, tgt: PointCloud, gt, inlier_dist: float):
    rows = table.source_indices
    return [
        inlier_ratio(src.points[rows], tgt.points[table.column(l)], gt, inlier_dist)
        for l in range(1, table.num_levels + 1)
    ]


# =============================================================================
# RUN ONE PAIR
# =============================================================================

def run_pair(
    source: PointCloud,
    target: PointCloud,
    gt: Optional[RigidTransform] = None,
    config: Optional[PipelineConfig] = None,
    pair_id: str = "pair",
    seed: Optional[int] = None,
) -> RegistrationReport:
    """
    Register source onto target.

    Args:
        source: X, the cloud to move
        target: Y
        gt: Ground truth, enables IR / RRE / RTE / RMSE and success flags
        config: PipelineConfig (defaults when None)
        pair_id: Label carried into the report
        seed: Overrides config.seed for sampling and RANSAC

    Returns:
        RegistrationReport; status "failed" with failure_stage set when a
        stage raised
    """
    config = PipelineConfig() if config is None else config
    seed = config.seed if seed is None else seed
    report = RegistrationReport(pair_id=pair_id)
    timings: Dict[str, float] = {}
    started = time.perf_counter()

    try:
        with _stage("preprocess", timings):
            src = preprocess(source, config)
            tgt = preprocess(target, config)
        report.num_source, report.num_target = len(src), len(tgt)

        with _stage("descriptors", timings):
            src_desc = describe(src, config)
            tgt_desc = describe(tgt, config)

        with _stage("matching", timings):
            sampled = sample_points(src, config.sample_count, seed)
            table = build_candidates(src_desc, tgt_desc, sampled)
        report.proposed = len(table)

        with _stage("voting", timings):
            corr = filter_candidates(table, tgt, config)
            if config.mutual:
                corr = _mutual_check(corr, src, src_desc, tgt_desc, config)
        report.accepted = len(corr)
        report.level_accepted = corr.level_counts(table.num_levels)

        if gt is not None:
            with _stage("metrics", timings):
                _correspondence_metrics(report, corr, table, src, tgt, gt, config)

        src_pts = src.points[corr.source]
        dst_pts = tgt.points[corr.target]
        with _stage("ransac", timings):
            found = ransac(src_pts, dst_pts, config.ransac_config(seed))
        report.ransac_iterations = found.iterations_run

        with _stage("refine", timings):
            threshold = config.ransac_config(seed).inlier_threshold
            final = refine(src_pts, dst_pts, found.transform, threshold)
            report.inliers = final.inlier_count
            if config.polish_rounds:
                final = polish(source.points, target.points, final.transform,
                               threshold, config.polish_rounds)
        report.transform = final.transform.to_list()

        if gt is not None:
            with _stage("metrics", timings):
                _pose_metrics(report, src, final.transform, gt, config)

    except _StageFailure as failure:
        report.mark_failed(failure.stage, failure.error)
        level = logging.INFO if isinstance(failure.error, (NoConsensusError, DegenerateInputError)) else logging.WARNING
        logger.log(level, f"[{pair_id}] failed at {failure.stage}: {failure.error}")

    timings["total"] = (time.perf_counter() - started) * 1000.0
    report.timings = timings
    logger.debug(
        f"[{pair_id}] {report.status}: proposed {report.proposed}, accepted {report.accepted}, "
        f"inliers {report.inliers}, {timings['total']:.1f} ms"
    )
    return report


def _correspondence_metrics(report, corr, table, src, tgt, gt, config):
    dist = config.thresholds.inlier_dist
    report.ir = inlier_ratio(src.points[corr.source], tgt.points[corr.target], gt, dist)
    report.level_ir = _level_irs(table, src, tgt, gt, dist)
    report.ir_level1 = report.level_ir[0]
    report.overlap = overlap_ratio(src, tgt, gt, dist)


def _pose_metrics(report, src, estimate, gt, config):
    report.rre = rre(estimate, gt)
    report.rte = rte(estimate, gt)
    report.rmse = transform_rmse(src, estimate, gt)
    report.success_rmse = is_success(report, config.thresholds, RecallMode.RMSE)
    report.success_rre_rte = is_success(report, config.thresholds, RecallMode.RRE_RTE)


def register(source: PointCloud, target: PointCloud, config: Optional[PipelineConfig] = None) -> RigidTransform:
    """
    Estimated transform only.

    Raises:
        NoConsensusError: the pair could not be registered
        ParameterError: any other stage failure
    """
    report = run_pair(source, target, config=config)
    if report.status != "ok":
        if report.failure_stage == "ransac":
            raise NoConsensusError(report.error or "registration failed")
        raise ParameterError(f"{report.failure_stage}: {report.error}")
    return report.estimate


def pair_seed(base: int, position: int) -> int:
    """Per-pair seed inside a suite."""
    return int(base) + int(position)

