"""Pose: closed-form alignment, RANSAC, refinement, consensus polish."""

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from cloud import ParameterError, RigidTransform
from evaluation import rre, rte
from pose import (
    DegenerateInputError,
    NoConsensusError,
    RansacConfig,
    kabsch,
    polish,
    ransac,
    refine,
)
from conftest import random_transform


def _outlier_problem(rng, inliers=60, outliers=40, noise=0.0):
    """Correspondences under a known transform; outliers go to random targets."""
    gt = random_transform(rng, max_translation=2.0)
    src = rng.uniform(-1.0, 1.0, size=(inliers + outliers, 3))
    dst = gt.apply(src) + rng.normal(scale=noise, size=src.shape) if noise else gt.apply(src)
    dst[inliers:] = rng.uniform(-5.0, 5.0, size=(outliers, 3))
    return gt, src, dst


# =============================================================================
# KABSCH
# =============================================================================

class TestKabsch:
    def test_exact_recovery(self, rng):
        for _ in range(100):
            gt = random_transform(rng, max_translation=3.0)
            src = rng.normal(size=(20, 3))
            est = kabsch(src, gt.apply(src))
            np.testing.assert_allclose(est.rotation, gt.rotation, atol=1e-9)
            np.testing.assert_allclose(est.translation, gt.translation, atol=1e-9)
            assert np.linalg.det(est.rotation) == pytest.approx(1.0)

    def test_reflection_is_not_returned(self, rng):
        src = rng.normal(size=(10, 3))
        mirrored = src * np.array([1.0, 1.0, -1.0])
        est = kabsch(src, mirrored)
        assert np.linalg.det(est.rotation) == pytest.approx(1.0)

    def test_weights_ignore_zero_weight_pairs(self, rng):
        gt = random_transform(rng)
        src = rng.normal(size=(12, 3))
        dst = gt.apply(src)
        dst[-2:] += 10.0
        weights = np.ones(12)
        weights[-2:] = 0.0
        est = kabsch(src, dst, weights)
        np.testing.assert_allclose(est.as_matrix(), gt.as_matrix(), atol=1e-9)

    def test_planar_input_is_enough(self, rng):
        gt = random_transform(rng)
        src = np.column_stack([rng.normal(size=(8, 2)), np.zeros(8)])
        np.testing.assert_allclose(kabsch(src, gt.apply(src)).as_matrix(), gt.as_matrix(), atol=1e-9)

    @pytest.mark.parametrize("src", [
        np.zeros((2, 3)),
        np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [3.0, 0.0, 0.0]]),
        np.ones((5, 3)),
    ])
    def test_degenerate(self, src):
        with pytest.raises(DegenerateInputError):
            kabsch(src, src)

    def test_rotating_the_target_rotates_the_estimate(self, rng):
        src = rng.normal(size=(25, 3))
        dst = random_transform(rng).apply(src) + rng.normal(scale=0.05, size=src.shape)
        base = kabsch(src, dst)
        for _ in range(20):
            q = Rotation.random(random_state=int(rng.integers(0, 2**31 - 1))).as_matrix()
            turned = kabsch(src, dst @ q.T)
            np.testing.assert_allclose(turned.rotation, q @ base.rotation, atol=1e-9)
            np.testing.assert_allclose(turned.translation, q @ base.translation, atol=1e-9)

    def test_no_nearby_pose_fits_better(self, rng):
        src = rng.normal(size=(30, 3))
        dst = random_transform(rng).apply(src) + rng.normal(scale=0.05, size=src.shape)
        est = kabsch(src, dst)
        best = np.sum((est.apply(src) - dst) ** 2)

        n = 10_000
        scale = rng.uniform(1e-5, 1e-1, size=(n, 1))
        turns = Rotation.from_rotvec(rng.normal(size=(n, 3)) * scale).as_matrix()
        rotations = np.einsum("nij,jk->nik", turns, est.rotation)
        translations = est.translation + rng.normal(size=(n, 3)) * scale
        moved = np.einsum("nij,mj->nmi", rotations, src) + translations[:, None, :]
        perturbed = np.sum((moved - dst) ** 2, axis=(1, 2))
        assert perturbed.min() >= best - 1e-12

    def test_bad_shapes_and_weights(self, rng):
        src = rng.normal(size=(5, 3))
        with pytest.raises(ParameterError):
            kabsch(src, src[:4])
        with pytest.raises(ParameterError):
            kabsch(src, src, weights=np.zeros(5))
        with pytest.raises(ParameterError):
            kabsch(src, src, weights=-np.ones(5))


# =============================================================================
# RANSAC
# =============================================================================

class TestRansac:
    def test_recovers_pose_with_outliers(self, rng):
        gt, src, dst = _outlier_problem(rng)
        result = ransac(src, dst, RansacConfig(inlier_threshold=0.05, seed=7))
        np.testing.assert_allclose(result.transform.as_matrix(), gt.as_matrix(), atol=1e-8)
        np.testing.assert_array_equal(result.inlier_indices, np.arange(60))
        assert result.refined
        assert result.iterations_run >= 1

    def test_noisy_inliers(self, rng):
        gt, src, dst = _outlier_problem(rng, inliers=150, outliers=100, noise=0.005)
        result = ransac(src, dst, RansacConfig(inlier_threshold=0.03, seed=1))
        assert np.linalg.norm(result.transform.translation - gt.translation) < 0.02
        assert result.inlier_count >= 135

    def test_deterministic(self, rng):
        _, src, dst = _outlier_problem(rng, inliers=30, outliers=70)
        config = RansacConfig(inlier_threshold=0.05, seed=11, batch_size=64)
        a = ransac(src, dst, config)
        b = ransac(src, dst, config)
        np.testing.assert_array_equal(a.transform.as_matrix(), b.transform.as_matrix())
        np.testing.assert_array_equal(a.inlier_indices, b.inlier_indices)
        assert a.iterations_run == b.iterations_run

    def test_stops_early_when_all_inliers(self, rng):
        gt = random_transform(rng)
        src = rng.normal(size=(50, 3))
        result = ransac(src, gt.apply(src), RansacConfig(inlier_threshold=0.01, seed=0))
        assert result.iterations_run == 1
        assert result.inlier_count == 50

    def test_too_few_correspondences(self, rng):
        src = rng.normal(size=(2, 3))
        with pytest.raises(DegenerateInputError):
            ransac(src, src, RansacConfig(inlier_threshold=0.1))

    def test_no_consensus(self):
        src = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        dst = np.array([[0.0, 0.0, 0.0], [5.0, 0.0, 0.0], [0.0, 0.2, 0.0]])
        with pytest.raises(NoConsensusError):
            ransac(src, dst, RansacConfig(inlier_threshold=1e-6, max_iterations=10))

    @pytest.mark.parametrize("overrides", [
        {"inlier_threshold": 0.0},
        {"inlier_threshold": 0.1, "confidence": 1.0},
        {"inlier_threshold": 0.1, "sample_size": 2},
        {"inlier_threshold": 0.1, "batch_size": 0},
    ])
    def test_config_validation(self, overrides):
        with pytest.raises(ParameterError):
            RansacConfig(**overrides)

    def test_threshold_from_voxel(self):
        assert RansacConfig.for_voxel(0.025).inlier_threshold == pytest.approx(0.05)

    def test_succeeds_across_seeds_with_forty_percent_outliers(self):
        threshold = 0.05
        successes = 0
        for seed in range(100):
            rng = np.random.default_rng(seed)
            gt, src, dst = _outlier_problem(rng, inliers=120, outliers=80)
            result = ransac(src, dst, RansacConfig(inlier_threshold=threshold, seed=seed))
            if rre(result.transform, gt) < 1.0 and rte(result.transform, gt) < threshold:
                successes += 1
        assert successes >= 99


class TestRefine:
    def test_reselects_and_refits(self, rng):
        gt, src, dst = _outlier_problem(rng)
        rough = RigidTransform(gt.rotation, gt.translation + 0.01)
        result = refine(src, dst, rough, inlier_threshold=0.05)
        assert result.refined
        np.testing.assert_allclose(result.transform.as_matrix(), gt.as_matrix(), atol=1e-8)
        np.testing.assert_array_equal(result.inlier_indices, np.arange(60))

    def test_keeps_input_with_too_few_inliers(self, rng):
        src = rng.normal(size=(10, 3))
        far = RigidTransform(np.eye(3), np.array([100.0, 0.0, 0.0]))
        result = refine(src, src, far, inlier_threshold=0.1)
        assert not result.refined
        assert result.transform is far
        assert result.inlier_count == 0

    def test_rejects_bad_threshold(self, rng):
        src = rng.normal(size=(4, 3))
        with pytest.raises(ParameterError):
            refine(src, src, RigidTransform.identity(), inlier_threshold=0.0)

    def test_never_raises_rmse_on_noisy_inputs(self):
        threshold = 0.04
        for seed in range(300):
            rng = np.random.default_rng(seed)
            gt, src, dst = _outlier_problem(rng, inliers=40, outliers=20, noise=0.012)
            turn = Rotation.from_rotvec(rng.normal(scale=0.01, size=3)).as_matrix()
            rough = RigidTransform(turn @ gt.rotation, gt.translation + rng.normal(scale=0.01, size=3))

            residual = np.linalg.norm(rough.apply(src) - dst, axis=1)
            selected = residual <= threshold
            result = refine(src, dst, rough, inlier_threshold=threshold)
            if selected.sum() < 3:
                assert not result.refined
                continue
            rmse_in = np.sqrt(np.mean(residual[selected] ** 2))
            assert result.inlier_rmse <= rmse_in + 1e-12, seed

            kept = result.inlier_indices
            assert np.all(selected[kept])
            after = np.linalg.norm(result.transform.apply(src[kept]) - dst[kept], axis=1)
            assert np.all(after <= threshold)
            assert result.inlier_rmse == pytest.approx(np.sqrt(np.mean(after ** 2)))


# =============================================================================
# CONSENSUS POLISH
# =============================================================================

class TestPolish:
    def test_restores_exact_pose_on_matching_clouds(self, rng):
        gt = random_transform(rng)
        src = rng.uniform(-1.0, 1.0, size=(300, 3))
        dst = gt.apply(src)
        turn = Rotation.from_rotvec([0.0, 0.0, 0.002]).as_matrix()
        rough = RigidTransform(turn @ gt.rotation, gt.translation + 0.001)
        result = polish(src, dst, rough, inlier_threshold=0.05)
        assert result.refined
        assert rre(result.transform, gt) < 1e-4
        assert rte(result.transform, gt) < 1e-8
        assert result.inlier_count == 300
        assert result.inlier_rmse < 1e-8

    def test_only_points_with_a_partner_count(self, rng):
        gt = random_transform(rng)
        src = np.vstack([rng.uniform(-1.0, 1.0, size=(200, 3)), rng.uniform(3.0, 4.0, size=(100, 3))])
        dst = np.vstack([gt.apply(src[:200]), rng.uniform(20.0, 21.0, size=(100, 3))])
        rough = RigidTransform(gt.rotation, gt.translation + 0.002)
        result = polish(src, dst, rough, inlier_threshold=0.03)
        assert rte(result.transform, gt) < 1e-8
        np.testing.assert_array_equal(result.inlier_indices, np.arange(200))

    def test_zero_rounds_returns_input(self, rng):
        src = rng.normal(size=(20, 3))
        rough = RigidTransform(np.eye(3), np.array([0.01, 0.0, 0.0]))
        result = polish(src, src, rough, inlier_threshold=0.1, max_rounds=0)
        assert result.transform is rough
        assert not result.refined
        assert result.iterations_run == 0

    @pytest.mark.parametrize("kwargs", [
        {"inlier_threshold": 0.0},
        {"inlier_threshold": 0.1, "max_rounds": -1},
    ])
    def test_rejects_bad_parameters(self, rng, kwargs):
        src = rng.normal(size=(5, 3))
        with pytest.raises(ParameterError):
            polish(src, src, RigidTransform.identity(), **kwargs)

    def test_rejects_empty_clouds(self):
        with pytest.raises(ParameterError):
            polish(np.zeros((0, 3)), np.ones((4, 3)), RigidTransform.identity(), inlier_threshold=0.1)
