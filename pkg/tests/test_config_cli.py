"""Configuration layering and the gc-register command line."""

import json

import numpy as np
import pytest
import yaml

from config import CliConfig, ConfigError, available_presets, dump, load_preset, resolve
from main import EXIT_ERROR, EXIT_OK, main
from settings import ENV_THREADS

FAST_FLAGS = ["--voxel", "0.1", "--radii", "6,4,2", "--samples", "100", "--ransac-iters", "2000"]


def _gen(tmp_path, pairs=3, *extra):
    out = tmp_path / "suite"
    code = main(["gen", str(out), "--pairs", str(pairs), "--n-points", "1500", "--overlap", "1",
                 "--max-rotation", "0", "--max-translation", "0", "--voxel", "0.1", *extra])
    assert code == EXIT_OK
    return out


# =============================================================================
# CONFIG LAYERS
# =============================================================================

class TestResolve:
    def test_defaults(self):
        config = resolve()
        assert config == CliConfig()
        assert config.radius_multipliers == [15.0, 10.0, 5.0]
        assert config.pipeline().d_tol == pytest.approx(0.05)

    def test_presets_exist(self):
        assert {"indoor", "outdoor", "object"} <= set(available_presets())
        assert "description" not in load_preset("indoor")

    def test_outdoor_preset(self):
        config = resolve(preset="outdoor")
        assert config.voxel_size == 0.3
        assert config.recall_mode == "rre_rte"
        assert config.thresholds().rr_rte == 2.0

    def test_layer_order(self, tmp_path):
        config_file = tmp_path / "c.yaml"
        config_file.write_text("seed: 7\ninlier_dist: 0.2\n")
        config = resolve(
            flags={"seed": 9, "voxel_size": None},
            preset="object",
            config_path=config_file,
            manifest_settings={"voxel_size": 0.05, "seed": 3, "inlier_dist": 0.3, "generator": {"n_points": 10}},
        )
        assert config.seed == 9              # flag beats config file
        assert config.inlier_dist == 0.2     # config file beats manifest
        assert config.voxel_size == 0.05     # manifest beats preset
        assert config.samples == [768]       # preset beats defaults

    def test_string_lists_are_split(self):
        config = resolve(flags={"radius_multipliers": "12, 8,4", "samples": "500,1000"})
        assert config.radius_multipliers == [12.0, 8.0, 4.0]
        assert config.samples == [500, 1000]

    @pytest.mark.parametrize("flags", [
        {"voxel_size": 0.0},
        {"samples": "0"},
        {"radius_multipliers": "5,10"},
        {"recall_mode": "median"},
        {"threads": 0},
        {"voting": "yes"},
        {"seed": 1.5},
        {"inlier_dist": "loose"},
        {"polish_rounds": -1},
    ])
    def test_invalid_values(self, flags):
        with pytest.raises(ConfigError):
            resolve(flags=flags)

    @pytest.mark.parametrize("name, distance", [("strict", 0.05), ("standard", 0.10)])
    def test_named_inlier_distances(self, tmp_path, name, distance):
        assert resolve(flags={"inlier_dist": name}).inlier_dist == distance
        assert resolve(flags={"inlier_dist": name}).thresholds().inlier_dist == distance
        config_file = tmp_path / "c.yaml"
        config_file.write_text(f"inlier_dist: {name}\n")
        assert resolve(config_path=config_file).inlier_dist == distance
        assert resolve(manifest_settings={"inlier_dist": name}).inlier_dist == distance

    def test_numeric_inlier_distance_still_accepted(self):
        assert resolve(flags={"inlier_dist": "0.2"}).inlier_dist == 0.2

    def test_unknown_keys(self, tmp_path):
        config_file = tmp_path / "c.yaml"
        config_file.write_text("voxel: 0.1\n")
        with pytest.raises(ConfigError):
            resolve(config_path=config_file)
        with pytest.raises(ConfigError):
            resolve(preset="no-such-preset")

    def test_unreadable_config(self, tmp_path):
        with pytest.raises(ConfigError):
            resolve(config_path=tmp_path / "absent.yaml")
        bad = tmp_path / "bad.yaml"
        bad.write_text("- a\n- b\n")
        with pytest.raises(ConfigError):
            resolve(config_path=bad)

    def test_dump_round_trip(self, tmp_path):
        config = resolve(preset="outdoor", flags={"seed": 4, "mutual": True, "samples": "100,200"})
        path = tmp_path / "dumped.yaml"
        path.write_text(dump(config))
        assert resolve(config_path=path) == config

    def test_thread_resolution(self, monkeypatch):
        monkeypatch.setenv(ENV_THREADS, "3")
        assert CliConfig().resolved_threads() == 3
        assert CliConfig(threads=2).resolved_threads() == 2
        monkeypatch.setenv(ENV_THREADS, "many")
        assert CliConfig().resolved_threads() >= 1


# =============================================================================
# COMMAND LINE
# =============================================================================

class TestCommands:
    def test_gen_writes_manifest(self, tmp_path):
        out = _gen(tmp_path, 4)
        data = yaml.safe_load((out / "manifest.yaml").read_text())
        assert len(data["pairs"]) == 4
        assert data["settings"]["voxel_size"] == 0.1
        assert (out / "pair_003_tgt.ply").is_file()

    def test_bench_identity_suite(self, tmp_path, capsys):
        suite = _gen(tmp_path)
        results = tmp_path / "results"
        capsys.readouterr()
        code = main(["bench", str(suite / "manifest.yaml"), *FAST_FLAGS, "--out-dir", str(results), "--json"])
        assert code == EXIT_OK
        summary = json.loads(capsys.readouterr().out)
        assert summary["rr"] == 1.0
        for name in ("summary.json", "pairs.csv", "estimates.yaml"):
            assert (results / name).is_file()

    def test_bench_sweep(self, tmp_path):
        suite = _gen(tmp_path, 2)
        results = tmp_path / "results"
        flags = [f if f != "100" else "40,80" for f in FAST_FLAGS]
        assert main(["bench", str(suite / "manifest.yaml"), *flags, "--out-dir", str(results)]) == EXIT_OK
        rows = (results / "sweep.csv").read_text().splitlines()
        assert rows[0].startswith("sample_count,")
        assert [r.split(",")[0] for r in rows[1:]] == ["40", "80"]
        assert (results / "pairs_k40.csv").is_file()

    def test_eval_of_bench_estimates(self, tmp_path, capsys):
        suite = _gen(tmp_path, 2)
        results = tmp_path / "results"
        assert main(["bench", str(suite / "manifest.yaml"), *FAST_FLAGS, "--out-dir", str(results)]) == EXIT_OK
        capsys.readouterr()
        code = main(["eval", str(results / "estimates.yaml"), str(suite / "manifest.yaml"),
                     "--out-dir", str(results), "--json"])
        assert code == EXIT_OK
        summary = json.loads(capsys.readouterr().out)
        assert summary["rr"] == 1.0
        assert (results / "eval.csv").is_file()

    def test_register_pair_with_itself(self, tmp_path):
        suite = _gen(tmp_path, 1)
        src = suite / "pair_000_src.ply"
        gt = tmp_path / "gt.txt"
        gt.write_text(" ".join(str(v) for v in np.eye(4).reshape(-1)))
        report = tmp_path / "report.json"
        code = main(["register", str(src), str(src), *FAST_FLAGS, "--gt", str(gt), "--report", str(report)])
        assert code == EXIT_OK
        document = json.loads(report.read_text())
        pair = document["pairs"][0]
        assert pair["status"] == "ok"
        np.testing.assert_allclose(np.reshape(pair["transform"], (4, 4)), np.eye(4), atol=1e-6)

    def test_missing_file_exits_one(self, tmp_path, capsys):
        missing = tmp_path / "nowhere.ply"
        code = main(["register", str(missing), str(missing), "--json"])
        assert code == EXIT_ERROR
        error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert "nowhere.ply" in error["error"]
        assert error["exit_code"] == EXIT_ERROR

    def test_empty_manifest_exits_one(self, tmp_path):
        manifest = tmp_path / "manifest.yaml"
        manifest.write_text("pairs: []\n")
        assert main(["bench", str(manifest)]) == EXIT_ERROR

    def test_usage_errors_exit_one(self):
        assert main(["bench"]) == EXIT_ERROR
        assert main(["register", "a.ply", "b.ply", "--no-such-flag"]) == EXIT_ERROR
        assert main(["frobnicate"]) == EXIT_ERROR

    def test_bad_config_value_exits_one(self, tmp_path):
        suite = _gen(tmp_path, 1)
        assert main(["bench", str(suite / "manifest.yaml"), "--voxel", "-1"]) == EXIT_ERROR

    def test_dump_config_feeds_config(self, tmp_path, capsys):
        assert main(["bench", "unused.yaml", "--dump-config"]) == EXIT_ERROR  # manifest is read first
        suite = _gen(tmp_path, 1)
        capsys.readouterr()
        assert main(["bench", str(suite / "manifest.yaml"), "--preset", "object", "--seed", "5", "--dump-config"]) == EXIT_OK
        dumped = capsys.readouterr().out
        path = tmp_path / "dumped.yaml"
        path.write_text(dumped)
        config = resolve(config_path=path)
        assert config.seed == 5
        assert config.voxel_size == 0.1
        assert config.samples == [768]

    def test_inlier_dist_flag_takes_names(self, capsys):
        assert main(["register", "a.ply", "b.ply", "--inlier-dist", "strict", "--dump-config"]) == EXIT_OK
        assert yaml.safe_load(capsys.readouterr().out)["inlier_dist"] == 0.05
        assert main(["register", "a.ply", "b.ply", "--inlier-dist", "loose", "--dump-config"]) == EXIT_ERROR

    def test_polish_rounds_flag(self, capsys):
        assert main(["register", "a.ply", "b.ply", "--polish-rounds", "0", "--dump-config"]) == EXIT_OK
        dumped = yaml.safe_load(capsys.readouterr().out)
        assert dumped["polish_rounds"] == 0
