"""
GC-Register Settings
Consistent-voting point cloud registration toolkit.

Every default the pipeline, evaluator and command line fall back to lives
here. Presets in data/presets/ and user config files override these values;
command-line flags override everything.
"""

from pathlib import Path

# =============================================================================
# PROJECT
# =============================================================================
PROJECT_NAME = 'gc-register'
VERSION = '0.1.0'

PROJECT_ROOT = Path(__file__).resolve().parent.parent
PRESETS_DIR = PROJECT_ROOT / 'data' / 'presets'

# Environment variables
ENV_THREADS = 'GC_REGISTER_THREADS'
ENV_DEBUG = 'GC_REGISTER_DEBUG'

# Report schema (bump on any breaking change to JSON/CSV layout)
SCHEMA_VERSION = 1

# =============================================================================
# CLOUD CORE
# =============================================================================
CLOUD_CONFIG = {
    'voxel_size': 0.025,            # 3DMatch convention, dataset units (m)
    'normal_neighbors': 33,         # kNN for PCA normals
    'viewpoint': (0.0, 0.0, 0.0),   # normals flipped toward this point
    'smooth_radius_mult': 1.5,      # superpoint normal smoothing radius / voxel
    'unit_norm_tol': 1e-6,
    'rotation_tol': 1e-9,
}

# Normal assigned when the neighborhood covariance has rank < 2
DEGENERATE_NORMAL = (0.0, 0.0, 1.0)

# =============================================================================
# DESCRIPTORS
# =============================================================================
DESCRIPTOR_CONFIG = {
    'radius_multipliers': (15.0, 10.0, 5.0),  # high / mid / low level
    'fpfh_bins': 11,                          # per angular feature -> 33 dims
    'histogram_total': 100.0,                 # each sub-histogram sums to this
    'ppf_neighbors': 64,                      # kNN for raw PPF patches
}

# =============================================================================
# MATCHING & VOTING
# =============================================================================
MATCHING_CONFIG = {
    'dtol_mult': 2.0,          # voting tolerance d = 2 x voxel
    'sample_count': 5000,      # points sampled before voting
    'mutual': False,           # mutual check after voting (off as reported)
    'voting': True,
}

# =============================================================================
# POSE ESTIMATION (RANSAC)
# =============================================================================
RANSAC_CONFIG = {
    'max_iterations': 50000,
    'inlier_mult': 2.0,        # inlier threshold = 2 x voxel
    'sample_size': 3,
    'confidence': 0.999,
    'batch_size': 256,         # hypotheses evaluated per vectorized batch
    'min_sample_area': 1e-12,  # near-collinear minimal samples are skipped
    'polish_rounds': 10,       # nearest-neighbor refits on the full clouds after refine
}

# =============================================================================
# EVALUATION
# =============================================================================
EVAL_CONFIG = {
    'inlier_dist': 0.10,       # IR inlier distance
    'fmr_min_ir': 0.05,        # FMR minimum inlier ratio
    'rr_rmse': 0.20,           # RR threshold, rmse mode
    'rr_rre': 5.0,             # RR threshold, rre_rte mode (degrees)
    'rr_rte': 2.0,             # RR threshold, rre_rte mode (length)
    'rr_mode': 'rmse',
}

# Named inlier distances, accepted wherever inlier_dist is set (--inlier-dist strict)
INLIER_DIST_PRESETS = {
    'strict': 0.05,
    'standard': 0.10,
}

# Conventions written into every report header
METRIC_CONVENTIONS = {
    'inlier_ratio': 'fraction of pairs with |gt(x) - y| < inlier_dist',
    'feature_matching_recall': 'fraction of pairs with IR > fmr_min_ir',
    'registration_recall.rmse': 'rmse of est(x) vs gt(x) over source < rr_rmse',
    'registration_recall.rre_rte': 'rre < rr_rre and rte < rr_rte',
    'rre': 'geodesic angle of R_gt^T R_est, degrees',
    'rte': '|t_est - t_gt|',
    'rre_rte_means': 'averaged over successful registrations only',
}

# =============================================================================
# LOSSES
# =============================================================================
LOSS_CONFIG = {
    'gamma': 16.0,
    'delta_p': 0.1,
    'delta_n': 1.4,
    'sample_count': 256,       # 512 outdoor, 768 object (see presets)
    'overlap_threshold': 0.05,
    'prob_eps': 1e-7,
}

# =============================================================================
# SYNTHETIC BENCHMARK
# =============================================================================
SYNTH_CONFIG = {
    'n_points': 4000,          # points per view before downsampling
    'overlap_frac': 0.7,
    'noise_sigma': 0.0,
    'max_rotation': 180.0,     # degrees
    'max_translation': 0.5,
    'shape': 'random-surface',
    'surface_depth': 1.5,      # surfaces sit this far from the sensor origin
    'bumps': 24,               # Gaussian bumps on the random surface
    'voxel_size': 0.05,        # voxel written into generated manifests
    'rte_scale_frac': 0.05,    # generated rr_rte = this x mean cloud scale
}

# =============================================================================
# RUNTIME
# =============================================================================
RUNTIME_CONFIG = {
    'seed': 0,
    'threads': None,           # None -> GC_REGISTER_THREADS or cpu count
    'out_dir': 'results',
}

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'
