"""
GC-Register Evaluation
======================

Registration metrics, the per-pair report record, and the loss evaluators.
"""

from .metrics import (
    EvalThresholds,
    RecallMode,
    UndefinedMetricError,
    feature_matching_recall,
    inlier_mask,
    inlier_ratio,
    is_success,
    overlap_ratio,
    registration_recall,
    registration_rmse,
    rre,
    rte,
    transform_rmse,
)

from .report import (
    CSV_COLUMNS,
    RegistrationReport,
)

from .losses import (
    CircleLossParams,
    LabelSet,
    LossPropagationError,
    bce_loss,
    build_label_set,
    circle_loss,
    circle_loss_from_distances,
    class_balance_weights,
    combined_loss,
    overlap_labels,
    saliency_labels,
    sample_correspondences,
    symmetric_bce_loss,
    symmetric_circle_loss,
)

__all__ = [
    # Metrics
    "EvalThresholds",
    "RecallMode",
    "UndefinedMetricError",
    "feature_matching_recall",
    "inlier_mask",
    "inlier_ratio",
    "is_success",
    "overlap_ratio",
    "registration_recall",
    "registration_rmse",
    "rre",
    "rte",
    "transform_rmse",

    # Reports
    "CSV_COLUMNS",
    "RegistrationReport",

    # Losses
    "CircleLossParams",
    "LabelSet",
    "LossPropagationError",
    "bce_loss",
    "build_label_set",
    "circle_loss",
    "circle_loss_from_distances",
    "class_balance_weights",
    "combined_loss",
    "overlap_labels",
    "saliency_labels",
    "sample_correspondences",
    "symmetric_bce_loss",
    "symmetric_circle_loss",
]
