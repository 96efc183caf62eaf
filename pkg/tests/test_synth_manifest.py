"""Synthetic pair generation and pair manifests."""

import numpy as np
import pytest
import yaml

from bench import (
    ManifestError,
    PairEntry,
    PairManifest,
    Shape,
    SynthConfig,
    load_manifest,
    save_manifest,
    synth_pair,
    write_synthetic_suite,
)
from cloud import ParameterError, RigidTransform, apply_transform


def _small(**overrides) -> SynthConfig:
    base = dict(n_points=300, overlap_frac=1.0, noise_sigma=0.0, max_rotation=45.0, max_translation=0.3, seed=5)
    base.update(overrides)
    return SynthConfig(**base)


# =============================================================================
# GENERATOR
# =============================================================================

class TestSynthPair:
    def test_identity_bounds(self):
        pair = synth_pair(_small(max_rotation=0.0, max_translation=0.0))
        np.testing.assert_array_equal(pair.target.points, pair.source.points)
        np.testing.assert_array_equal(pair.gt.as_matrix(), np.eye(4))

    @pytest.mark.parametrize("shape", list(Shape))
    def test_full_overlap_is_exact(self, shape):
        pair = synth_pair(_small(shape=shape))
        moved = apply_transform(pair.source, pair.gt)
        np.testing.assert_allclose(moved.points, pair.target.points, atol=1e-12)

    def test_shared_points_map_exactly(self):
        pair = synth_pair(_small(overlap_frac=0.7))
        assert pair.overlap == pytest.approx(0.7)
        mapped = pair.gt.apply(pair.source.points[pair.shared_source])
        np.testing.assert_allclose(mapped, pair.target.points[pair.shared_target], atol=1e-12)

    def test_overlap_fraction_over_seeds(self):
        fractions = [synth_pair(_small(n_points=100, overlap_frac=0.7, seed=s)).overlap for s in range(100)]
        assert all(abs(f - 0.7) <= 0.05 for f in fractions)

    def test_deterministic_per_seed(self):
        a, b = synth_pair(_small(noise_sigma=0.01)), synth_pair(_small(noise_sigma=0.01))
        np.testing.assert_array_equal(a.source.points, b.source.points)
        np.testing.assert_array_equal(a.target.points, b.target.points)
        assert not np.array_equal(a.source.points, synth_pair(_small(noise_sigma=0.01, seed=6)).source.points)

    def test_rotation_bound(self):
        for seed in range(20):
            gt = synth_pair(_small(max_rotation=10.0, seed=seed)).gt
            angle = np.degrees(np.arccos(np.clip((np.trace(gt.rotation) - 1.0) / 2.0, -1.0, 1.0)))
            assert angle <= 10.0 + 1e-9
            assert np.linalg.norm(gt.translation) <= 0.3 + 1e-12

    @pytest.mark.parametrize("overrides", [
        {"overlap_frac": 0.0},
        {"overlap_frac": 1.5},
        {"noise_sigma": -0.1},
        {"n_points": 2},
        {"max_rotation": 200.0},
        {"shape": "torus"},
    ])
    def test_config_validation(self, overrides):
        with pytest.raises((ParameterError, ValueError)):
            _small(**overrides)


# =============================================================================
# MANIFESTS
# =============================================================================

class TestManifest:
    def test_suite_writes_loadable_manifest(self, tmp_path):
        manifest, path = write_synthetic_suite(tmp_path, 3, _small(n_points=200), voxel_size=0.05)
        assert path == tmp_path / "manifest.yaml"
        loaded = load_manifest(path)
        assert [p.pair_id for p in loaded.pairs] == ["pair_000", "pair_001", "pair_002"]
        assert loaded.settings["voxel_size"] == 0.05
        assert loaded.settings["seed"] == 5
        assert loaded.settings["rr_rte"] > 0
        for original, again in zip(manifest.pairs, loaded.pairs):
            np.testing.assert_allclose(again.gt.as_matrix(), original.gt.as_matrix(), atol=1e-12)
            assert again.source.is_file() and again.target.is_file()

    def test_suite_is_byte_identical(self, tmp_path):
        write_synthetic_suite(tmp_path / "a", 2, _small(n_points=150))
        write_synthetic_suite(tmp_path / "b", 2, _small(n_points=150))
        for name in ("manifest.yaml", "pair_000_src.ply", "pair_001_tgt.ply"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_paths_are_relative_to_manifest(self, tmp_path):
        write_synthetic_suite(tmp_path, 1, _small(n_points=100))
        data = yaml.safe_load((tmp_path / "manifest.yaml").read_text())
        assert data["pairs"][0]["source"] == "pair_000_src.ply"

    def test_missing_file_strict_and_lenient(self, tmp_path):
        write_synthetic_suite(tmp_path, 2, _small(n_points=100))
        (tmp_path / "pair_001_tgt.ply").unlink()
        with pytest.raises(ManifestError):
            load_manifest(tmp_path / "manifest.yaml")
        assert len(load_manifest(tmp_path / "manifest.yaml", strict=False)) == 2

    @pytest.mark.parametrize("text", [
        "pairs: []\n",
        "settings: {}\n",
        "pairs:\n  - source: a.ply\n    target: b.ply\n",
        "pairs:\n  - source: a.ply\n    target: b.ply\n    gt: [1, 2, 3]\n",
        "pairs: [\n",
        "settings: 3\npairs:\n  - source: a.ply\n    target: b.ply\n    gt: [1,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,0,1]\n",
        "pairs:\n  - source: a.ply\n    target: b.ply\n    gt: [2,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,0,1]\n",
    ])
    def test_malformed(self, tmp_path, text):
        path = tmp_path / "manifest.yaml"
        path.write_text(text)
        with pytest.raises(ManifestError):
            load_manifest(path, strict=False)

    def test_duplicate_ids(self, tmp_path):
        entry = PairEntry("same", tmp_path / "a.ply", tmp_path / "b.ply", RigidTransform.identity())
        with pytest.raises(ManifestError):
            PairManifest([entry, entry])

    def test_save_then_load(self, tmp_path):
        (tmp_path / "a.ply").write_bytes(b"")
        (tmp_path / "b.ply").write_bytes(b"")
        gt = RigidTransform(np.eye(3), np.array([1.0, 2.0, 3.0]))
        save_manifest(PairManifest([PairEntry("x", tmp_path / "a.ply", tmp_path / "b.ply", gt)], {"seed": 4}),
                      tmp_path / "m.yaml")
        loaded = load_manifest(tmp_path / "m.yaml")
        assert loaded.settings == {"seed": 4}
        np.testing.assert_array_equal(loaded.pairs[0].gt.translation, [1.0, 2.0, 3.0])

    def test_unreadable(self, tmp_path):
        with pytest.raises(ManifestError):
            load_manifest(tmp_path / "absent.yaml")
