"""
GC-Register Synthetic Pairs
===========================

Desk-scale registration pairs with exact ground truth.

A model surface is sampled once, sorted along a random sweep direction,
and cut into two overlapping windows of n_points each: the source takes
the first window, the target takes the window shifted by
round((1 - overlap_frac) * n_points) and is moved by the ground-truth
transform. So for noise-free pairs gt(X[s + k]) == Y[k] exactly on the
shared part.

Every shape keeps the sensor origin on one side of (or inside) the
surface, and the transform moves the origin by at most max_translation,
so normals oriented toward the origin agree between the two views.
"""

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from cloud import ParameterError, PointCloud, RigidTransform
from settings import SYNTH_CONFIG
from .cloud_io import write_cloud
from .manifest import PairEntry, PairManifest, save_manifest

logger = logging.getLogger("gcreg.synth")


class Shape(Enum):
    SPHERE = "sphere"
    BOX_ROOM = "box-room"
    RANDOM_SURFACE = "random-surface"


@dataclass
class SynthConfig:
    """Generator knobs; max_rotation in degrees, lengths in cloud units."""
    n_points: int = SYNTH_CONFIG['n_points']
    overlap_frac: float = SYNTH_CONFIG['overlap_frac']
    noise_sigma: float = SYNTH_CONFIG['noise_sigma']
    max_rotation: float = SYNTH_CONFIG['max_rotation']
    max_translation: float = SYNTH_CONFIG['max_translation']
    shape: Shape = Shape(SYNTH_CONFIG['shape'])
    seed: int = 0

    def __post_init__(self):
        self.shape = Shape(self.shape)
        if not 0 < self.overlap_frac <= 1:
            raise ParameterError(f"overlap_frac must be in (0, 1], got {self.overlap_frac}")
        if self.noise_sigma < 0:
            raise ParameterError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.n_points < 3:
            raise ParameterError(f"n_points must be >= 3, got {self.n_points}")
        if not 0 <= self.max_rotation <= 180 or self.max_translation < 0:
            raise ParameterError("max_rotation must be in [0, 180] and max_translation >= 0")

    def to_dict(self) -> dict:
        return {
            "n_points": self.n_points,
            "overlap_frac": self.overlap_frac,
            "noise_sigma": self.noise_sigma,
            "max_rotation": self.max_rotation,
            "max_translation": self.max_translation,
            "shape": self.shape.value,
            "seed": self.seed,
        }


@dataclass
class SynthPair:
    """
    A generated pair. shared_source[k] and shared_target[k] are the same
    model point seen from both sides.
    """
    source: PointCloud
    target: PointCloud
    gt: RigidTransform
    shared_source: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    shared_target: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def overlap(self) -> float:
        return len(self.shared_source) / max(len(self.source), 1)

    @property
    def scale(self) -> float:
        """Bounding-box diagonal of the source."""
        pts = self.source.points
        return float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0))) if len(pts) else 0.0

    def as_tuple(self) -> Tuple[PointCloud, PointCloud, RigidTransform]:
        return self.source, self.target, self.gt


# =============================================================================
# SHAPES
# =============================================================================

def _unit_vectors(rng: np.random.Generator, count: int) -> np.ndarray:
    v = rng.normal(size=(count, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _sample_sphere(rng, count: int) -> np.ndarray:
    return _unit_vectors(rng, count)


def _sample_boxes(rng, count: int, boxes) -> np.ndarray:
    """Area-weighted samples over the faces of axis-aligned boxes (lo, hi)."""
    faces = []
    for lo, hi in boxes:
        size = hi - lo
        for axis in range(3):
            u, v = [a for a in range(3) if a != axis]
            for side in (lo[axis], hi[axis]):
                faces.append((axis, side, u, v, lo, size, size[u] * size[v]))
    areas = np.array([f[-1] for f in faces])
    which = rng.choice(len(faces), size=count, p=areas / areas.sum())
    out = np.empty((count, 3))
    for k, (axis, side, u, v, lo, size, _) in enumerate(faces):
        rows = np.nonzero(which == k)[0]
        out[rows, axis] = side
        out[rows, u] = lo[u] + rng.random(rows.size) * size[u]
        out[rows, v] = lo[v] + rng.random(rows.size) * size[v]
    return out


def _box_room(rng, count: int) -> np.ndarray:
    room = (np.array([-2.0, -2.0, -1.5]), np.array([2.0, 2.0, 1.5]))
    boxes = [room]
    # three furniture-like boxes on the floor, low enough to stay below the sensor
    for _ in range(3):
        size = rng.uniform([0.3, 0.3, 0.3], [0.9, 0.7, 0.8])
        corner = rng.uniform([-1.9, -1.9], [1.9 - size[0], 1.9 - size[1]])
        lo = np.array([corner[0], corner[1], -1.5])
        boxes.append((lo, lo + size))
    return _sample_boxes(rng, count, boxes)


def _random_surface(rng, count: int) -> np.ndarray:
    depth = SYNTH_CONFIG['surface_depth']
    bumps = SYNTH_CONFIG['bumps']
    centers = rng.uniform(-1.5, 1.5, size=(bumps, 2))
    heights = rng.uniform(-0.25, 0.25, size=bumps)
    widths = rng.uniform(0.1, 0.4, size=bumps)

    xy = rng.uniform(-1.5, 1.5, size=(count, 2))
    d2 = np.sum((xy[:, None, :] - centers[None]) ** 2, axis=2)
    z = -depth + np.sum(heights * np.exp(-d2 / (2.0 * widths ** 2)), axis=1)
    return np.column_stack([xy, z])


def _sweep_direction(rng, shape: Shape) -> np.ndarray:
    if shape is Shape.SPHERE:
        return _unit_vectors(rng, 1)[0]
    phi = rng.uniform(0.0, 2.0 * np.pi)
    return np.array([np.cos(phi), np.sin(phi), 0.0])


def random_transform(rng, max_rotation: float, max_translation: float) -> RigidTransform:
    """Uniform axis, angle uniform in [0, max_rotation] degrees, translation uniform in a ball."""
    axis = _unit_vectors(rng, 1)[0]
    angle = np.radians(rng.uniform(0.0, max_rotation)) if max_rotation > 0 else 0.0
    rotation = Rotation.from_rotvec(axis * angle).as_matrix() if angle > 0 else np.eye(3)
    direction = _unit_vectors(rng, 1)[0]
    radius = max_translation * rng.random() ** (1.0 / 3.0) if max_translation > 0 else 0.0
    return RigidTransform(rotation, direction * radius)


# =============================================================================
# GENERATOR
# =============================================================================

SAMPLERS = {
    Shape.SPHERE: _sample_sphere,
    Shape.BOX_ROOM: _box_room,
    Shape.RANDOM_SURFACE: _random_surface,
}


def synth_pair(config: SynthConfig) -> SynthPair:
    """
    Generate one pair with known ground truth, deterministic per seed.

    Returns:
        SynthPair; `.as_tuple()` gives (X, Y, gt)
    """
    rng = np.random.default_rng(config.seed)
    n = config.n_points
    shift = int(round((1.0 - config.overlap_frac) * n))

    model = SAMPLERS[config.shape](rng, n + shift)
    order = np.argsort(model @ _sweep_direction(rng, config.shape), kind="stable")
    model = model[order]

    gt = random_transform(rng, config.max_rotation, config.max_translation)
    source = model[:n].copy()
    target = gt.apply(model[shift:shift + n])
    if config.noise_sigma > 0:
        source = source + rng.normal(scale=config.noise_sigma, size=source.shape)
        target = target + rng.normal(scale=config.noise_sigma, size=target.shape)

    shared_source = np.arange(shift, n, dtype=np.int64)
    shared_target = np.arange(0, n - shift, dtype=np.int64)
    pair = SynthPair(PointCloud(source), PointCloud(target), gt, shared_source, shared_target)
    logger.debug(
        f"synth_pair seed={config.seed} shape={config.shape.value}: {n} points, "
        f"overlap {pair.overlap:.3f}"
    )
    return pair


# =============================================================================
# SUITES ON DISK
# =============================================================================

def write_synthetic_suite(
    out_dir,
    count: int,
    config: SynthConfig,
    voxel_size: float = SYNTH_CONFIG['voxel_size'],
    binary: bool = True,
):
    """
    Generate `count` pairs (seeds config.seed .. config.seed + count - 1)
    as PLY files plus a ready-to-run manifest.yaml.

    The manifest settings carry the voxel size, the base seed and an
    rr_rte threshold of 0.05 x the mean source scale. Output is
    byte-identical for identical arguments.

    Returns:
        (PairManifest, path of the manifest file)
    """
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    entries, scales = [], []
    for k in range(count):
        pair = synth_pair(replace(config, seed=config.seed + k))
        pair_id = f"pair_{k:03d}"
        source_path = out_dir / f"{pair_id}_src.ply"
        target_path = out_dir / f"{pair_id}_tgt.ply"
        write_cloud(pair.source, source_path, binary=binary)
        write_cloud(pair.target, target_path, binary=binary)
        entries.append(PairEntry(pair_id, source_path, target_path, pair.gt))
        scales.append(pair.scale)

    settings = {
        "voxel_size": float(voxel_size),
        "seed": int(config.seed),
        "rr_rte": float(SYNTH_CONFIG['rte_scale_frac'] * np.mean(scales)),
        "generator": config.to_dict(),
    }
    manifest = PairManifest(entries, settings, out_dir.resolve())
    manifest_path = out_dir / "manifest.yaml"
    save_manifest(manifest, manifest_path)
    logger.info(f"Wrote {count} synthetic pairs and {manifest_path}")
    return manifest, manifest_path
