"""
GC-Register Loss Evaluators
===========================

Scalar evaluators for the training objectives, usable without any
learning framework:
- circle loss over sampled correspondences, per feature level
- weighted binary cross-entropy for overlap and saliency scores
- ground-truth overlap / saliency labels and class-balance weights
- the combined loss (plain sum of the five parts)

No gradients here; everything is plain numpy.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from cloud import ParameterError, PointCloud, RigidTransform, SpatialIndex, build_index
from settings import LOSS_CONFIG

logger = logging.getLogger("gcreg.losses")


class LossPropagationError(ArithmeticError):
    """Raised when a loss part is NaN or infinite."""

    def __init__(self, message: str, part: str):
        super().__init__(message)
        self.part = part


# =============================================================================
# TYPES
# =============================================================================

@dataclass(frozen=True)
class CircleLossParams:
    """Scale gamma, positive margin delta_p, negative margin delta_n, sample count."""
    gamma: float = LOSS_CONFIG['gamma']
    delta_p: float = LOSS_CONFIG['delta_p']
    delta_n: float = LOSS_CONFIG['delta_n']
    sample_count: int = LOSS_CONFIG['sample_count']

    def __post_init__(self):
        if not self.gamma > 0:
            raise ParameterError(f"gamma must be positive, got {self.gamma}")
        if not self.delta_n > self.delta_p > 0:
            raise ParameterError(f"need delta_n > delta_p > 0, got {self.delta_n} / {self.delta_p}")
        if self.sample_count < 2:
            raise ParameterError(f"sample_count must be >= 2, got {self.sample_count}")


@dataclass(frozen=True, eq=False)
class LabelSet:
    """Binary overlap / saliency labels for one cloud plus their balance weights."""
    overlap: np.ndarray
    saliency: np.ndarray
    overlap_weights: np.ndarray
    saliency_weights: np.ndarray

    def __post_init__(self):
        n = np.shape(self.overlap)[0]
        for name in ("overlap", "saliency"):
            labels = np.asarray(getattr(self, name))
            if labels.shape != (n,) or not np.all((labels == 0) | (labels == 1)):
                raise ParameterError(f"{name} labels must be a 0/1 vector of length {n}")
            object.__setattr__(self, name, labels.astype(np.int8))
        for name in ("overlap_weights", "saliency_weights"):
            weights = np.asarray(getattr(self, name), dtype=np.float64)
            if weights.shape != (n,) or not np.all(np.isfinite(weights)) or np.any(weights < 0):
                raise ParameterError(f"{name} must be finite, non-negative, length {n}")
            object.__setattr__(self, name, weights)


# =============================================================================
# CIRCLE LOSS
# =============================================================================

def circle_loss_from_distances(
    positive: np.ndarray,
    negatives: np.ndarray,
    params: CircleLossParams,
    negative_mask: Optional[np.ndarray] = None,
) -> float:
    """
    Mean over anchors of
        log[1 + exp(g a_p (D_p - dp)) * sum_k exp(g a_n,k (dn - D_n,k))]
    with a_p = [D_p - dp]+ and a_n,k = [dn - D_n,k]+.

    Args:
        positive: (S,) anchor-to-positive feature distances
        negatives: (S, M) anchor-to-negative feature distances
        negative_mask: optional (S, M) bool, False entries are not negatives

    Raises:
        ParameterError: an anchor without negatives
    """
    positive = np.asarray(positive, dtype=np.float64)
    negatives = np.asarray(negatives, dtype=np.float64)
    mask = np.ones(negatives.shape, dtype=bool) if negative_mask is None else np.asarray(negative_mask, bool)
    if negatives.ndim != 2 or negatives.shape[0] != positive.shape[0]:
        raise ParameterError("negatives must be (S, M) with S matching positives")
    if positive.size == 0 or not np.all(mask.any(axis=1)):
        raise ParameterError("every anchor needs at least one negative")

    g, dp, dn = params.gamma, params.delta_p, params.delta_n
    term_p = g * np.maximum(positive - dp, 0.0) * (positive - dp)
    term_n = g * np.maximum(dn - negatives, 0.0) * (dn - negatives)
    term_n = np.where(mask, term_n, -np.inf)

    per_anchor = np.logaddexp(0.0, term_p + logsumexp(term_n, axis=1))
    return float(np.mean(per_anchor))


def _pairwise(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)


def circle_loss(
    feat_x: np.ndarray,
    feat_y: np.ndarray,
    sampled_corr: Sequence[Tuple[int, int]],
    params: Optional[CircleLossParams] = None,
) -> float:
    """
    Circle loss of source features against target features.

    For anchor (i, j): the positive is feat_y[j]; negatives are the targets
    of every other sampled correspondence (duplicates kept).
    Each negative beyond delta_n still adds exp(0) = 1 inside the log, so with
    S sampled correspondences the loss bottoms out at log(S), not 0.

    Raises:
        ParameterError: fewer than 2 sampled correspondences
    """
    params = CircleLossParams() if params is None else params
    corr = np.asarray(sampled_corr, dtype=np.int64).reshape(-1, 2)
    s = corr.shape[0]
    if s < 2:
        raise ParameterError(f"circle loss needs at least 2 correspondences, got {s}")

    fx = np.asarray(feat_x, dtype=np.float64)[corr[:, 0]]
    fy = np.asarray(feat_y, dtype=np.float64)[corr[:, 1]]
    dist = _pairwise(fx, fy)
    return circle_loss_from_distances(np.diag(dist), dist, params, negative_mask=~np.eye(s, dtype=bool))


def symmetric_circle_loss(
    feat_x: np.ndarray,
    feat_y: np.ndarray,
    sampled_corr: Sequence[Tuple[int, int]],
    params: Optional[CircleLossParams] = None,
) -> float:
    """Average of the X->Y and Y->X circle losses over the same sample."""
    corr = np.asarray(sampled_corr, dtype=np.int64).reshape(-1, 2)
    return 0.5 * (
        circle_loss(feat_x, feat_y, corr, params)
        + circle_loss(feat_y, feat_x, corr[:, ::-1], params)
    )


def sample_correspondences(
    correspondences: Sequence[Tuple[int, int]],
    params: Optional[CircleLossParams] = None,
    seed: int = 0,
) -> np.ndarray:
    """Draw up to sample_count ground-truth correspondences without replacement, in drawn order."""
    params = CircleLossParams() if params is None else params
    corr = np.asarray(correspondences, dtype=np.int64).reshape(-1, 2)
    if corr.shape[0] <= params.sample_count:
        return corr
    rng = np.random.default_rng(seed)
    return corr[rng.choice(corr.shape[0], size=params.sample_count, replace=False)]


# =============================================================================
# LABELS
# =============================================================================

def overlap_labels(X: PointCloud, Y: PointCloud, gt: RigidTransform, dist_threshold: Optional[float] = None) -> np.ndarray:
    """1 where the nearest Y point to gt(x_i) is closer than dist_threshold, else 0."""
    threshold = LOSS_CONFIG['overlap_threshold'] if dist_threshold is None else dist_threshold
    if not threshold > 0:
        raise ParameterError(f"dist_threshold must be positive, got {threshold}")
    if len(X) == 0:
        return np.zeros(0, dtype=np.int8)
    _, dist = build_index(Y).nearest_many(gt.apply(X.points))
    return (dist < threshold).astype(np.int8)


def saliency_labels(
    X: PointCloud,
    feat_x: np.ndarray,
    feat_y: np.ndarray,
    Y: PointCloud,
    gt: RigidTransform,
    dist_threshold: Optional[float] = None,
) -> np.ndarray:
    """1 where the feature-space nearest neighbor of x_i in Y lies within dist_threshold of gt(x_i)."""
    threshold = LOSS_CONFIG['overlap_threshold'] if dist_threshold is None else dist_threshold
    if not threshold > 0:
        raise ParameterError(f"dist_threshold must be positive, got {threshold}")
    feat_x = np.asarray(feat_x, dtype=np.float64)
    feat_y = np.asarray(feat_y, dtype=np.float64)
    if feat_x.shape[0] != len(X) or feat_y.shape[0] != len(Y):
        raise ParameterError("descriptors are not aligned with their clouds")
    if len(X) == 0:
        return np.zeros(0, dtype=np.int8)
    matched, _ = SpatialIndex(feat_y).nearest_many(feat_x)
    dist = np.linalg.norm(gt.apply(X.points) - Y.points[matched], axis=1)
    return (dist < threshold).astype(np.int8)


def class_balance_weights(labels) -> np.ndarray:
    """
    w_i = N / (2 * count(class of i)); a single-class input gets all ones.

    Example:
        1 positive among 10 -> positive weight 5, negatives 5/9 each
    """
    labels = np.asarray(labels).reshape(-1)
    if labels.size == 0:
        raise ParameterError("class_balance_weights needs at least one label")
    positives = int(np.count_nonzero(labels == 1))
    negatives = labels.size - positives
    if positives == 0 or negatives == 0:
        return np.ones(labels.size)
    return np.where(labels == 1, labels.size / (2.0 * positives), labels.size / (2.0 * negatives))


def build_label_set(
    X: PointCloud,
    Y: PointCloud,
    feat_x: np.ndarray,
    feat_y: np.ndarray,
    gt: RigidTransform,
    dist_threshold: Optional[float] = None,
) -> LabelSet:
    """Overlap and saliency labels for X plus their balance weights."""
    overlap = overlap_labels(X, Y, gt, dist_threshold)
    saliency = saliency_labels(X, feat_x, feat_y, Y, gt, dist_threshold)
    return LabelSet(overlap, saliency, class_balance_weights(overlap), class_balance_weights(saliency))


# =============================================================================
# BCE & COMBINED
# =============================================================================

def bce_loss(pred, labels, weights=None, eps: Optional[float] = None) -> float:
    """
    -sum_i w_i [y_i log p_i + (1 - y_i) log(1 - p_i)], p clamped to [eps, 1 - eps].
    """
    eps = LOSS_CONFIG['prob_eps'] if eps is None else eps
    p = np.clip(np.asarray(pred, dtype=np.float64).reshape(-1), eps, 1.0 - eps)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    w = np.ones_like(p) if weights is None else np.asarray(weights, dtype=np.float64).reshape(-1)
    if not (p.shape == y.shape == w.shape):
        raise ParameterError(f"pred, labels and weights lengths differ: {p.shape} / {y.shape} / {w.shape}")
    return float(-np.sum(w * (y * np.log(p) + (1.0 - y) * np.log(1.0 - p))))


def symmetric_bce_loss(pred_x, labels_x, weights_x, pred_y, labels_y, weights_y) -> float:
    """Average of the source-side and target-side BCE losses."""
    return 0.5 * (bce_loss(pred_x, labels_x, weights_x) + bce_loss(pred_y, labels_y, weights_y))


LOSS_PARTS = ("circle_high", "circle_mid", "circle_low", "overlap", "saliency")


def combined_loss(
    circle_high: float,
    circle_mid: float,
    circle_low: float,
    overlap: float,
    saliency: float,
) -> float:
    """
    Unweighted sum of the three circle losses and the two BCE losses.

    Raises:
        LossPropagationError: a part is NaN or infinite (names the part)
    """
    values = (circle_high, circle_mid, circle_low, overlap, saliency)
    for name, value in zip(LOSS_PARTS, values):
        if not math.isfinite(value):
            logger.error(f"Loss part '{name}' is not finite: {value}")
            raise LossPropagationError(f"loss part '{name}' is not finite ({value})", part=name)
    return math.fsum(values)
