"""
GC-Register Point Cloud Containers
==================================

The atoms of the pipeline:
- PointCloud: (N, 3) points with optional unit normals
- RigidTransform: rotation + translation, the T that aligns source to target

Both are immutable after construction. Arrays are copied in and marked
read-only, so a cloud can be shared across threads without locking.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from settings import CLOUD_CONFIG

logger = logging.getLogger("gcreg.cloud")


class ParameterError(ValueError):
    """Raised when an operation receives an out-of-contract parameter."""
    pass


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=np.float64, copy=True)
    array.setflags(write=False)
    return array


# =============================================================================
# POINT CLOUD
# =============================================================================

@dataclass(frozen=True, eq=False)
class PointCloud:
    """
    Ordered list of 3D points with optional unit normals.

    Attributes:
        points: (N, 3) coordinates in dataset units
        normals: (N, 3) unit vectors, or None
        degenerate_normals: (N,) bool mask of points whose normal is the
            fallback value because their neighborhood was rank-deficient
    """
    points: np.ndarray
    normals: Optional[np.ndarray] = None
    degenerate_normals: Optional[np.ndarray] = None

    def __post_init__(self):
        points = _frozen(self.points)
        if points.size == 0:
            points = _frozen(np.zeros((0, 3)))
        if points.ndim != 2 or points.shape[1] != 3:
            raise ParameterError(f"points must be (N, 3), got {np.shape(self.points)}")
        object.__setattr__(self, "points", points)

        if self.normals is not None:
            normals = _frozen(self.normals)
            if normals.shape != points.shape:
                raise ParameterError(
                    f"normals shape {normals.shape} does not match points {points.shape}"
                )
            lengths = np.linalg.norm(normals, axis=1)
            bad = np.abs(lengths - 1.0) > CLOUD_CONFIG['unit_norm_tol']
            if np.any(bad):
                raise ParameterError(
                    f"{int(bad.sum())} normals are not unit length (first at index {int(np.argmax(bad))})"
                )
            object.__setattr__(self, "normals", normals)

        if self.degenerate_normals is not None:
            mask = np.array(self.degenerate_normals, dtype=bool, copy=True)
            mask.setflags(write=False)
            object.__setattr__(self, "degenerate_normals", mask)

    def __len__(self) -> int:
        return int(self.points.shape[0])

    @property
    def has_normals(self) -> bool:
        return self.normals is not None

    def require_non_empty(self, what: str = "cloud"):
        if len(self) == 0:
            raise ParameterError(f"{what} is empty")

    def require_normals(self, what: str = "cloud"):
        if self.normals is None:
            raise ParameterError(f"{what} has no normals")

    def with_normals(
        self,
        normals: np.ndarray,
        degenerate: Optional[np.ndarray] = None
    ) -> "PointCloud":
        """Same points, new normals."""
        return PointCloud(self.points, normals, degenerate)

    def without_normals(self) -> "PointCloud":
        return PointCloud(self.points)

    def subset(self, indices: Sequence[int]) -> "PointCloud":
        """Cloud restricted to the given indices, in that order."""
        idx = np.asarray(indices, dtype=np.int64)
        normals = None if self.normals is None else self.normals[idx]
        degenerate = None if self.degenerate_normals is None else self.degenerate_normals[idx]
        return PointCloud(self.points[idx], normals, degenerate)


# =============================================================================
# RIGID TRANSFORM
# =============================================================================

@dataclass(frozen=True, eq=False)
class RigidTransform:
    """
    Rotation (3x3, orthonormal, det +1) plus translation.

    Maps p -> R p + t. Validation tolerance is 1e-9 elementwise on R^T R - I
    and on det(R) - 1.
    """
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rotation = _frozen(self.rotation)
        translation = _frozen(self.translation).reshape(-1)
        if rotation.shape != (3, 3) or translation.shape != (3,):
            raise ParameterError(
                f"expected 3x3 rotation and 3-vector translation, got {rotation.shape} / {translation.shape}"
            )
        if not (np.all(np.isfinite(rotation)) and np.all(np.isfinite(translation))):
            raise ParameterError("transform contains non-finite values")
        tol = CLOUD_CONFIG['rotation_tol']
        if np.max(np.abs(rotation.T @ rotation - np.eye(3))) > tol:
            raise ParameterError("rotation is not orthonormal")
        if abs(np.linalg.det(rotation) - 1.0) > tol:
            raise ParameterError("rotation determinant is not +1")
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, matrix, project: bool = False) -> "RigidTransform":
        """
        Build from a 4x4 homogeneous matrix.

        Args:
            matrix: 4x4 array-like (or 16 row-major numbers)
            project: snap the rotation block onto SO(3) first (it must be
                within 1e-6 of a rotation); use for matrices parsed from
                text with limited precision

        Raises:
            ParameterError: wrong shape or bottom row not (0, 0, 0, 1)
        """
        m = np.asarray(matrix, dtype=np.float64)
        if m.size != 16:
            raise ParameterError(f"expected a 4x4 matrix or 16 numbers, got shape {m.shape}")
        m = m.reshape(4, 4)
        if not np.all(np.isfinite(m)):
            raise ParameterError("transform matrix contains non-finite values")
        if np.max(np.abs(m[3] - np.array([0.0, 0.0, 0.0, 1.0]))) > 1e-12:
            raise ParameterError(f"bottom row must be (0, 0, 0, 1), got {m[3].tolist()}")
        rotation = m[:3, :3]
        if project:
            snapped = nearest_rotation(rotation)
            if np.max(np.abs(snapped - rotation)) > 1e-6:
                raise ParameterError("rotation block is too far from a rotation to snap")
            rotation = snapped
        return cls(rotation, m[:3, 3])

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other: p -> self(other(p))."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map (N, 3) points."""
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def rotate(self, vectors: np.ndarray) -> np.ndarray:
        """Map (N, 3) direction vectors (no translation)."""
        return np.asarray(vectors, dtype=np.float64) @ self.rotation.T

    def to_list(self) -> list:
        """16 row-major numbers."""
        return [float(v) for v in self.as_matrix().reshape(-1)]


def nearest_rotation(matrix: np.ndarray) -> np.ndarray:
    """Closest proper rotation to a 3x3 matrix in the Frobenius sense."""
    u, _, vt = np.linalg.svd(np.asarray(matrix, dtype=np.float64))
    d = 1.0 if np.linalg.det(u @ vt) >= 0 else -1.0
    return u @ np.diag([1.0, 1.0, d]) @ vt


# =============================================================================
# OPERATIONS
# =============================================================================

def apply_transform(cloud: PointCloud, transform: RigidTransform) -> PointCloud:
    """
    Map a cloud through a rigid transform.

    Points go p -> R p + t, normals go n -> R n.
    """
    normals = None if cloud.normals is None else transform.rotate(cloud.normals)
    return PointCloud(transform.apply(cloud.points), normals, cloud.degenerate_normals)


def voxel_downsample(cloud: PointCloud, voxel_size: float) -> PointCloud:
    """
    One point per occupied voxel, at the centroid of the voxel's members.

    Voxels are the cells floor(p / voxel_size). Output order follows the
    lexicographic order of voxel keys, so the result is deterministic.
    Normals are not carried over; estimate them on the output.

    Args:
        cloud: Input cloud (non-empty)
        voxel_size: Edge length of a voxel, > 0

    Returns:
        Downsampled cloud with len <= len(cloud)

    Raises:
        ParameterError: voxel_size <= 0 or empty cloud
    """
    if not voxel_size > 0:
        raise ParameterError(f"voxel_size must be positive, got {voxel_size}")
    cloud.require_non_empty()

    keys = np.floor(cloud.points / voxel_size).astype(np.int64)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)

    sums = np.zeros((counts.shape[0], 3))
    np.add.at(sums, inverse, cloud.points)
    centroids = sums / counts[:, None]

    logger.debug(f"Voxel downsample {len(cloud)} -> {len(centroids)} points (voxel {voxel_size})")
    return PointCloud(centroids)
