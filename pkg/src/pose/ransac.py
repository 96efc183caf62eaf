"""
GC-Register RANSAC
==================

Robust rigid pose from putative correspondences.

Minimal samples are drawn from a seeded generator in fixed-size batches,
each batch is solved with one stacked SVD, then hypotheses are scored in
sample order. For a fixed config (seed and batch size included) the
result is bit-identical run to run.

Scoring: most inliers wins, ties go to the lower inlier RMSE, then to the
earlier hypothesis. Sampling stops early once the usual confidence bound
    1 - (1 - w^s)^k >= confidence
holds for the best inlier fraction w so far.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from cloud import ParameterError, RigidTransform, SpatialIndex
from settings import RANSAC_CONFIG
from .kabsch import DegenerateInputError, _batched_rotation, kabsch

logger = logging.getLogger("gcreg.ransac")


# =============================================================================
# CONFIG & RESULT TYPES
# =============================================================================

@dataclass
class RansacConfig:
    """RANSAC knobs. inlier_threshold is a length in dataset units."""
    inlier_threshold: float
    max_iterations: int = RANSAC_CONFIG['max_iterations']
    sample_size: int = RANSAC_CONFIG['sample_size']
    confidence: float = RANSAC_CONFIG['confidence']
    seed: int = 0
    batch_size: int = RANSAC_CONFIG['batch_size']
    min_sample_area: float = RANSAC_CONFIG['min_sample_area']

    def __post_init__(self):
        if self.sample_size < 3:
            raise ParameterError(f"sample_size must be >= 3, got {self.sample_size}")
        if not 0 < self.confidence < 1:
            raise ParameterError(f"confidence must be in (0, 1), got {self.confidence}")
        if not self.inlier_threshold > 0:
            raise ParameterError(f"inlier_threshold must be positive, got {self.inlier_threshold}")
        if self.max_iterations < 1 or self.batch_size < 1:
            raise ParameterError("max_iterations and batch_size must be >= 1")

    @classmethod
    def for_voxel(cls, voxel_size: float, seed: int = 0, **overrides) -> "RansacConfig":
        """Default threshold of inlier_mult x voxel."""
        return cls(inlier_threshold=RANSAC_CONFIG['inlier_mult'] * voxel_size, seed=seed, **overrides)


@dataclass
class PoseResult:
    """
    Outcome of ransac / refine.

    inlier_indices index into the correspondence arrays that were passed in.
    """
    transform: RigidTransform
    inlier_indices: np.ndarray
    iterations_run: int
    inlier_rmse: float
    refined: bool = False
    skipped_samples: int = 0

    @property
    def inlier_count(self) -> int:
        return int(len(self.inlier_indices))


class NoConsensusError(Exception):
    """Raised when no hypothesis gathers a single inlier."""

    def __init__(self, message: str, best: Optional[PoseResult] = None):
        super().__init__(message)
        self.best = best


# =============================================================================
# HELPERS
# =============================================================================

def _check_pairs(src, dst):
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.ndim != 2 or src.shape[1] != 3 or src.shape != dst.shape:
        raise ParameterError(f"src and dst must be matching (K, 3) arrays, got {src.shape} / {dst.shape}")
    return src, dst


def _inliers(transform: RigidTransform, src: np.ndarray, dst: np.ndarray, threshold: float):
    residual = np.linalg.norm(transform.apply(src) - dst, axis=1)
    inl = np.nonzero(residual <= threshold)[0]
    rmse = float(np.sqrt(np.mean(residual[inl] ** 2))) if inl.size else math.inf
    return inl, rmse


def _draw_samples(rng: np.random.Generator, count: int, population: int, size: int) -> np.ndarray:
    """(count, size) rows of distinct indices in [0, population)."""
    out = np.empty((count, size), dtype=np.int64)
    taken = np.empty((count, 0), dtype=np.int64)
    for col in range(size):
        x = rng.integers(0, population - col, size=count)
        # shift past already-taken values, visiting them in ascending order
        for m in range(col):
            x = x + (x >= taken[:, m])
        out[:, col] = x
        taken = np.sort(np.concatenate([taken, x[:, None]], axis=1), axis=1)
    return out


def _score_batch(src, dst, samples, threshold, min_area):
    """Fit every sample, count inliers. Returns (R, t, counts, rmse, valid)."""
    a = src[samples]
    b = dst[samples]
    area_a = 0.5 * np.linalg.norm(np.cross(a[:, 1] - a[:, 0], a[:, 2] - a[:, 0]), axis=1)
    area_b = 0.5 * np.linalg.norm(np.cross(b[:, 1] - b[:, 0], b[:, 2] - b[:, 0]), axis=1)
    valid = (area_a >= min_area) & (area_b >= min_area)

    ca = a.mean(axis=1, keepdims=True)
    cb = b.mean(axis=1, keepdims=True)
    h = np.swapaxes(a - ca, 1, 2) @ (b - cb)
    rot = _batched_rotation(h)
    trans = cb[:, 0] - np.einsum('bij,bj->bi', rot, ca[:, 0])

    moved = np.einsum('bij,kj->bki', rot, src) + trans[:, None, :]
    residual = np.linalg.norm(moved - dst[None], axis=2)
    mask = residual <= threshold
    counts = mask.sum(axis=1)
    sq = np.where(mask, residual ** 2, 0.0).sum(axis=1)
    rmse = np.where(counts > 0, np.sqrt(sq / np.maximum(counts, 1)), np.inf)
    counts = np.where(valid, counts, 0)
    return rot, trans, counts, rmse, valid


def _needed_iterations(inlier_fraction: float, sample_size: int, confidence: float) -> float:
    if inlier_fraction >= 1.0:
        return 1
    if inlier_fraction <= 0.0:
        return math.inf
    miss = 1.0 - inlier_fraction ** sample_size
    if miss <= 0.0:
        return 1
    return math.log(1.0 - confidence) / math.log(miss)


# =============================================================================
# RANSAC
# =============================================================================

def ransac(src, dst, config: RansacConfig) -> PoseResult:
    """
    Robust rigid transform taking src[k] onto dst[k] for most k.

    Args:
        src: (K, 3) source points of the putative correspondences
        dst: (K, 3) target points, paired by row
        config: RansacConfig

    Returns:
        PoseResult refit on the consensus set; inliers recomputed under the
        returned transform

    Raises:
        DegenerateInputError: fewer than sample_size correspondences
        NoConsensusError: no hypothesis found any inlier
    """
    src, dst = _check_pairs(src, dst)
    k = src.shape[0]
    s = config.sample_size
    if k < s:
        raise DegenerateInputError(f"need at least {s} correspondences, got {k}")

    rng = np.random.default_rng(config.seed)
    best = None  # (count, rmse, R, t)
    iterations = 0
    skipped = 0
    done = False

    while not done and iterations < config.max_iterations:
        batch = min(config.batch_size, config.max_iterations - iterations)
        samples = _draw_samples(rng, batch, k, s)
        rot, trans, counts, rmse, valid = _score_batch(
            src, dst, samples, config.inlier_threshold, config.min_sample_area
        )
        for b in range(batch):
            iterations += 1
            if not valid[b]:
                skipped += 1
            elif counts[b] > 0 and (
                best is None or counts[b] > best[0] or (counts[b] == best[0] and rmse[b] < best[1])
            ):
                best = (int(counts[b]), float(rmse[b]), rot[b], trans[b])

            if best is not None and iterations >= _needed_iterations(best[0] / k, s, config.confidence):
                done = True
                break

    if best is None:
        raise NoConsensusError(
            f"no hypothesis had any inlier after {iterations} iterations ({skipped} degenerate samples)",
            best=None,
        )

    hypothesis = RigidTransform(best[2], best[3])
    inl, rmse_final = _inliers(hypothesis, src, dst, config.inlier_threshold)
    result = PoseResult(hypothesis, inl, iterations, rmse_final, refined=False, skipped_samples=skipped)

    # Refit on the consensus set; keep it unless it loses inliers
    try:
        refit = kabsch(src[inl], dst[inl])
        refit_inl, refit_rmse = _inliers(refit, src, dst, config.inlier_threshold)
        if refit_inl.size >= inl.size and refit_inl.size > 0:
            result = PoseResult(refit, refit_inl, iterations, refit_rmse, refined=True, skipped_samples=skipped)
    except DegenerateInputError as e:
        logger.debug(f"Consensus refit skipped: {e}")

    logger.debug(
        f"RANSAC: {result.inlier_count}/{k} inliers after {iterations} iterations "
        f"(rmse {result.inlier_rmse:.4g}, skipped {skipped})"
    )
    return result


def refine(src, dst, transform: RigidTransform, inlier_threshold: float) -> PoseResult:
    """
    One re-selection + refit pass.

    Inliers are recomputed under `transform` and kabsch is refit on them
    once. The result keeps the selected inliers that stay within the
    threshold under the refit, so its RMSE never exceeds the input RMSE on
    that set. With fewer than 3 inliers (or a degenerate inlier set) the
    input transform comes back unchanged with refined=False.
    """
    src, dst = _check_pairs(src, dst)
    if not inlier_threshold > 0:
        raise ParameterError(f"inlier_threshold must be positive, got {inlier_threshold}")

    inl, rmse = _inliers(transform, src, dst, inlier_threshold)
    unchanged = PoseResult(transform, inl, 0, rmse, refined=False)
    if inl.size < 3:
        logger.warning(f"refine: only {inl.size} inliers, keeping input transform")
        return unchanged
    try:
        refit = kabsch(src[inl], dst[inl])
    except DegenerateInputError as e:
        logger.warning(f"refine: {e}; keeping input transform")
        return unchanged

    residual = np.linalg.norm(refit.apply(src[inl]) - dst[inl], axis=1)
    kept = residual <= inlier_threshold
    if not kept.any():
        return unchanged
    new_rmse = float(np.sqrt(np.mean(residual[kept] ** 2)))
    if new_rmse > rmse:
        # rounding only
        logger.debug(f"refine: refit rmse {new_rmse:.3g} > input {rmse:.3g}, keeping input transform")
        return unchanged
    return PoseResult(refit, inl[kept], 1, new_rmse, refined=True)


def polish(
    source_points,
    target_points,
    transform: RigidTransform,
    inlier_threshold: float,
    max_rounds: int = RANSAC_CONFIG['polish_rounds'],
) -> PoseResult:
    """
    Refit on the whole geometric consensus, not just the putative matches.

    Each round pairs every source point with its nearest target point under
    the current transform, keeps pairs within inlier_threshold and refits
    kabsch on them. Rounds stop when the paired set repeats, when the RMSE
    over that set would not drop, or after max_rounds. inlier_indices are
    source point indices; max_rounds = 0 returns the input unchanged.
    """
    src = np.asarray(source_points, dtype=np.float64).reshape(-1, 3)
    tgt = np.asarray(target_points, dtype=np.float64).reshape(-1, 3)
    if not inlier_threshold > 0:
        raise ParameterError(f"inlier_threshold must be positive, got {inlier_threshold}")
    if max_rounds < 0:
        raise ParameterError(f"max_rounds must be >= 0, got {max_rounds}")
    if len(src) == 0 or len(tgt) == 0:
        raise ParameterError("polish needs non-empty point sets")

    index = SpatialIndex(tgt)
    current = transform
    matched, dist = index.nearest_many(current.apply(src))
    keep = np.nonzero(dist <= inlier_threshold)[0]
    rmse = float(np.sqrt(np.mean(dist[keep] ** 2))) if keep.size else math.inf
    rounds = 0

    while rounds < max_rounds and keep.size >= 3:
        try:
            refit = kabsch(src[keep], tgt[matched[keep]])
        except DegenerateInputError as e:
            logger.debug(f"polish: {e}; stopping after {rounds} rounds")
            break
        same_set = np.linalg.norm(refit.apply(src[keep]) - tgt[matched[keep]], axis=1)
        if float(np.sqrt(np.mean(same_set ** 2))) >= rmse:
            break
        current = refit
        rounds += 1
        new_matched, dist = index.nearest_many(current.apply(src))
        new_keep = np.nonzero(dist <= inlier_threshold)[0]
        stable = np.array_equal(new_keep, keep) and np.array_equal(new_matched[keep], matched[keep])
        matched, keep = new_matched, new_keep
        rmse = float(np.sqrt(np.mean(dist[keep] ** 2))) if keep.size else math.inf
        if stable:
            break

    logger.debug(f"polish: {rounds} rounds, {keep.size} pairs, rmse {rmse:.3g}")
    return PoseResult(current, keep, rounds, rmse, refined=rounds > 0)
