"""Descriptors: PPF quadruples, FPFH histograms, multi-level containers."""

import math

import numpy as np
import pytest

from cloud import ParameterError, PointCloud, apply_transform, estimate_normals
from features import (
    DescriptorSet,
    MultiScaleDescriptors,
    bin_features,
    fpfh,
    multiscale_fpfh,
    pair_features,
    ppf,
    ppf_batch,
    ppf_patch,
)
from conftest import random_transform, surface_points


@pytest.fixture
def oriented_surface(rng) -> PointCloud:
    return estimate_normals(PointCloud(surface_points(rng, count=300)), 16, viewpoint=(0.0, 0.0, 0.0))


def _random_unit(rng, count):
    v = rng.normal(size=(count, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _darboux(p1, n1, p2, n2):
    dp = p2 - p1
    d = np.linalg.norm(dp)
    if d == 0.0:
        return 0.0, 0.0, 0.0
    a1, a2 = n1 @ dp / d, n2 @ dp / d
    if abs(a1) < abs(a2):
        u, other, dp, f3 = n2, n1, -dp, -a2
    else:
        u, other, f3 = n1, n2, a1
    v = np.cross(dp, u)
    if np.linalg.norm(v) == 0.0:
        return 0.0, 0.0, 0.0
    v = v / np.linalg.norm(v)
    w = np.cross(u, v)
    return math.atan2(w @ other, u @ other), v @ other, f3


def _bin(value, low, high, bins):
    return min(max(int(math.floor(bins * (value - low) / (high - low))), 0), bins - 1)


def _fpfh_by_definition(points, normals, radius, bins, total=100.0):
    """Two plain loops over every point pair, no index and no vectorization."""
    n = len(points)
    neighbors = [
        [j for j in range(n)
         if 0.0 < np.linalg.norm(points[j] - points[i]) < radius]
        for i in range(n)
    ]
    spfh = np.zeros((n, 3 * bins))
    for i in range(n):
        for j in neighbors[i]:
            f1, f2, f3 = _darboux(points[i], normals[i], points[j], normals[j])
            spfh[i, _bin(f1, -math.pi, math.pi, bins)] += total / len(neighbors[i])
            spfh[i, bins + _bin(f2, -1.0, 1.0, bins)] += total / len(neighbors[i])
            spfh[i, 2 * bins + _bin(f3, -1.0, 1.0, bins)] += total / len(neighbors[i])
    out = np.zeros_like(spfh)
    for i in range(n):
        hist = spfh[i].copy()
        for j in neighbors[i]:
            hist += spfh[j] / np.linalg.norm(points[j] - points[i]) / len(neighbors[i])
        for f in range(3):
            part = hist[f * bins:(f + 1) * bins]
            if part.sum() > 0:
                out[i, f * bins:(f + 1) * bins] = part * total / part.sum()
    return out


# =============================================================================
# PPF
# =============================================================================

class TestPpf:
    def test_perpendicular_pair(self):
        q = ppf((0, 0, 0), (0, 0, 1), (1, 0, 0), (0, 0, 1))
        assert q.angle1 == pytest.approx(math.pi / 2)
        assert q.angle2 == pytest.approx(math.pi / 2)
        assert q.angle3 == pytest.approx(0.0)
        assert q.distance == pytest.approx(1.0)

    def test_antiparallel_normals(self):
        q = ppf((0, 0, 0), (0, 0, 1), (0, 0, 2), (0, 0, -1))
        assert q.angle1 == pytest.approx(0.0)
        assert q.angle2 == pytest.approx(math.pi)
        assert q.angle3 == pytest.approx(math.pi)
        assert q.distance == pytest.approx(2.0)

    def test_coincident_points_give_zeros(self):
        assert ppf((1, 2, 3), (0, 0, 1), (1, 2, 3), (1, 0, 0)).as_tuple() == (0.0, 0.0, 0.0, 0.0)

    def test_rejects_non_unit_normal(self):
        with pytest.raises(ParameterError):
            ppf((0, 0, 0), (0, 0, 2), (1, 0, 0), (0, 0, 1))

    def test_angles_in_range(self, rng):
        out = ppf_batch(rng.normal(size=(500, 3)), _random_unit(rng, 500),
                        rng.normal(size=(500, 3)), _random_unit(rng, 500))
        assert out.shape == (500, 4)
        assert np.all(out[:, :3] >= 0.0) and np.all(out[:, :3] <= math.pi)

    def test_rigid_invariance(self, rng):
        p_i, p_j = rng.normal(size=(200, 3)), rng.normal(size=(200, 3))
        n_i, n_j = _random_unit(rng, 200), _random_unit(rng, 200)
        t = random_transform(rng, max_translation=3.0)
        before = ppf_batch(p_i, n_i, p_j, n_j)
        after = ppf_batch(t.apply(p_i), t.rotate(n_i), t.apply(p_j), t.rotate(n_j))
        np.testing.assert_allclose(after, before, atol=1e-9)


class TestPpfPatch:
    def test_shape_and_order(self, oriented_surface):
        patch = ppf_patch(oriented_surface, k=8)
        assert patch.shape == (len(oriented_surface), 8, 4)
        dist = patch[:, :, 3]
        assert np.all(dist > 0)
        assert np.all(np.diff(dist, axis=1) >= 0)

    def test_matches_direct_ppf(self, oriented_surface):
        patch = ppf_patch(oriented_surface, k=4)
        pts, nrm = oriented_surface.points, oriented_surface.normals
        d = np.linalg.norm(pts - pts[0], axis=1)
        d[0] = np.inf
        nearest = int(np.argmin(d))
        expected = ppf(pts[0], nrm[0], pts[nearest], nrm[nearest]).as_tuple()
        np.testing.assert_allclose(patch[0, 0], expected, atol=1e-12)

    def test_requires_normals(self, surface_cloud):
        with pytest.raises(ParameterError):
            ppf_patch(surface_cloud, k=4)

    def test_rejects_k_out_of_range(self, oriented_surface):
        with pytest.raises(ParameterError):
            ppf_patch(oriented_surface, k=len(oriented_surface))


# =============================================================================
# FPFH
# =============================================================================

class TestPairFeatures:
    def test_ranges(self, rng):
        feats = pair_features(rng.normal(size=(300, 3)), _random_unit(rng, 300),
                              rng.normal(size=(300, 3)), _random_unit(rng, 300))
        assert np.all(np.abs(feats[:, 0]) <= math.pi)
        assert np.all(np.abs(feats[:, 1:]) <= 1.0 + 1e-12)

    def test_coincident_pair_is_zero(self):
        feats = pair_features(np.zeros((1, 3)), np.array([[0.0, 0.0, 1.0]]),
                              np.zeros((1, 3)), np.array([[1.0, 0.0, 0.0]]))
        np.testing.assert_array_equal(feats, np.zeros((1, 3)))

    def test_bins_cover_range(self):
        feats = np.array([[-math.pi, -1.0, -1.0], [math.pi, 1.0, 1.0], [0.0, 0.0, 0.0]])
        np.testing.assert_array_equal(bin_features(feats, 11), [[0, 0, 0], [10, 10, 10], [5, 5, 5]])


class TestFpfh:
    def test_sub_histograms_sum_to_100(self, oriented_surface):
        desc = fpfh(oriented_surface, radius=0.3, bins=11)
        assert desc.dimension == 33
        assert not desc.empty.any()
        sums = desc.vectors.reshape(len(desc), 3, 11).sum(axis=2)
        np.testing.assert_allclose(sums, 100.0, atol=1e-9)

    def test_isolated_point_gets_zero_vector(self, rng):
        pts = np.vstack([surface_points(rng, count=200), [[50.0, 50.0, 50.0]]])
        cloud = estimate_normals(PointCloud(pts), 8, viewpoint=(0.0, 0.0, 0.0))
        desc = fpfh(cloud, radius=0.3)
        assert desc.empty[-1]
        np.testing.assert_array_equal(desc.vectors[-1], 0.0)
        assert not desc.empty[:-1].any()

    def test_rigid_invariant(self, oriented_surface, rng):
        a = fpfh(oriented_surface, radius=0.3).vectors
        for _ in range(5):
            moved = apply_transform(oriented_surface, random_transform(rng, max_translation=2.0))
            b = fpfh(moved, radius=0.3).vectors
            np.testing.assert_allclose(b, a, rtol=0, atol=1e-6)

    def test_matches_double_loop_definition(self, rng):
        cloud = estimate_normals(PointCloud(surface_points(rng, count=30)), 8, viewpoint=(0.0, 0.0, 0.0))
        radius, bins = 0.6, 11
        expected = _fpfh_by_definition(cloud.points, cloud.normals, radius, bins)
        got = fpfh(cloud, radius=radius, bins=bins)
        np.testing.assert_allclose(got.vectors, expected, rtol=0, atol=1e-9)
        np.testing.assert_array_equal(got.empty, ~expected.any(axis=1))

    def test_rejects_bad_parameters(self, oriented_surface, surface_cloud):
        with pytest.raises(ParameterError):
            fpfh(oriented_surface, radius=0.0)
        with pytest.raises(ParameterError):
            fpfh(oriented_surface, radius=0.3, bins=1)
        with pytest.raises(ParameterError):
            fpfh(surface_cloud, radius=0.3)


class TestMultiscaleFpfh:
    def test_radii_follow_multipliers(self, oriented_surface):
        multi = multiscale_fpfh(oriented_surface, 0.025, (15, 10, 5))
        assert multi.num_levels == 3
        assert multi.radii == pytest.approx([0.375, 0.25, 0.125])
        assert [s.level for s in multi.levels] == [1, 2, 3]

    def test_level_one_matches_single_radius(self, oriented_surface):
        multi = multiscale_fpfh(oriented_surface, 0.025, (15, 10, 5))
        single = fpfh(oriented_surface, radius=15 * 0.025)
        np.testing.assert_allclose(multi.level(1).vectors, single.vectors, rtol=0, atol=1e-12)

    @pytest.mark.parametrize("mults", [(5, 10, 15), (15, 15), (), (15, -5)])
    def test_rejects_bad_multipliers(self, oriented_surface, mults):
        with pytest.raises(ParameterError):
            multiscale_fpfh(oriented_surface, 0.025, mults)


class TestContainers:
    def test_descriptor_set_rejects_nan(self):
        with pytest.raises(ParameterError):
            DescriptorSet(1, np.array([[0.0, np.nan]]))

    def test_levels_must_be_numbered_in_order(self):
        with pytest.raises(ParameterError):
            MultiScaleDescriptors([DescriptorSet(2, np.zeros((3, 4)))])

    def test_radii_must_decrease(self):
        with pytest.raises(ParameterError):
            MultiScaleDescriptors([DescriptorSet(1, np.zeros((3, 4)), radius=0.1),
                                   DescriptorSet(2, np.zeros((3, 4)), radius=0.2)])

    def test_level_access_and_subset(self):
        multi = MultiScaleDescriptors([DescriptorSet(1, np.arange(12.0).reshape(3, 4), radius=0.2),
                                       DescriptorSet(2, np.ones((3, 4)), radius=0.1)])
        with pytest.raises(ParameterError):
            multi.level(3)
        sub = multi.subset([2, 0])
        np.testing.assert_array_equal(sub.level(1).vectors, [[8, 9, 10, 11], [0, 1, 2, 3]])
        assert multi.first(1).num_levels == 1
