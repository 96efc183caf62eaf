"""
GC-Register Configuration
=========================

CliConfig is the single resolved parameter set behind every command.

Resolution order, lowest to highest:
    settings.py defaults < --preset < manifest settings < --config file < flags

Each layer is a flat mapping of CliConfig field names. The result is
validated by building the PipelineConfig it describes, so an invalid
value fails before any cloud is read. dump() writes YAML that --config
reads back to the same CliConfig.
"""

import logging
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import yaml

from cloud import ParameterError
from evaluation import EvalThresholds, RecallMode
from bench import PipelineConfig
from settings import (
    CLOUD_CONFIG,
    DESCRIPTOR_CONFIG,
    ENV_THREADS,
    EVAL_CONFIG,
    INLIER_DIST_PRESETS,
    MATCHING_CONFIG,
    PRESETS_DIR,
    RANSAC_CONFIG,
    RUNTIME_CONFIG,
)

logger = logging.getLogger("gcreg.config")


class ConfigError(ValueError):
    """Raised for unknown keys, unreadable files or values that fail validation."""
    pass


@dataclass
class CliConfig:
    """Flat, fully resolved command configuration."""
    voxel_size: float = CLOUD_CONFIG['voxel_size']
    radius_multipliers: List[float] = field(default_factory=lambda: list(DESCRIPTOR_CONFIG['radius_multipliers']))
    fpfh_bins: int = DESCRIPTOR_CONFIG['fpfh_bins']
    normal_neighbors: int = CLOUD_CONFIG['normal_neighbors']
    smooth_radius_mult: float = CLOUD_CONFIG['smooth_radius_mult']

    dtol_mult: float = MATCHING_CONFIG['dtol_mult']
    samples: List[int] = field(default_factory=lambda: [MATCHING_CONFIG['sample_count']])
    voting: bool = MATCHING_CONFIG['voting']
    single_scale: bool = False
    mutual: bool = MATCHING_CONFIG['mutual']

    ransac_iterations: int = RANSAC_CONFIG['max_iterations']
    inlier_threshold: Optional[float] = None
    confidence: float = RANSAC_CONFIG['confidence']
    batch_size: int = RANSAC_CONFIG['batch_size']
    polish_rounds: int = RANSAC_CONFIG['polish_rounds']

    inlier_dist: float = EVAL_CONFIG['inlier_dist']
    fmr_min_ir: float = EVAL_CONFIG['fmr_min_ir']
    rr_rmse: float = EVAL_CONFIG['rr_rmse']
    rr_rre: float = EVAL_CONFIG['rr_rre']
    rr_rte: float = EVAL_CONFIG['rr_rte']
    recall_mode: str = EVAL_CONFIG['rr_mode']

    seed: int = RUNTIME_CONFIG['seed']
    threads: Optional[int] = RUNTIME_CONFIG['threads']
    out_dir: str = RUNTIME_CONFIG['out_dir']

    def thresholds(self) -> EvalThresholds:
        return EvalThresholds(
            inlier_dist=self.inlier_dist,
            fmr_min_ir=self.fmr_min_ir,
            rr_rmse=self.rr_rmse,
            rr_rre=self.rr_rre,
            rr_rte=self.rr_rte,
        )

    def pipeline(self, sample_count: Optional[int] = None) -> PipelineConfig:
        """The PipelineConfig for one run (first sample count unless given)."""
        return PipelineConfig(
            voxel_size=self.voxel_size,
            radius_multipliers=tuple(self.radius_multipliers),
            fpfh_bins=self.fpfh_bins,
            normal_neighbors=self.normal_neighbors,
            smooth_radius_mult=self.smooth_radius_mult,
            dtol_mult=self.dtol_mult,
            sample_count=self.samples[0] if sample_count is None else sample_count,
            voting=self.voting,
            mutual=self.mutual,
            single_scale=self.single_scale,
            ransac_iterations=self.ransac_iterations,
            inlier_threshold=self.inlier_threshold,
            confidence=self.confidence,
            batch_size=self.batch_size,
            polish_rounds=self.polish_rounds,
            thresholds=self.thresholds(),
            recall_mode=RecallMode(self.recall_mode),
            seed=self.seed,
        )

    def validate(self):
        """
        Raises:
            ConfigError: any field outside its owning type's contract
        """
        if not self.samples or any(int(s) < 1 for s in self.samples):
            raise ConfigError(f"samples must be a non-empty list of positive counts, got {self.samples}")
        if self.threads is not None and int(self.threads) < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        try:
            RecallMode(self.recall_mode)
            self.pipeline()
        except (ParameterError, ValueError, TypeError) as e:
            raise ConfigError(str(e)) from e

    def resolved_threads(self) -> int:
        """threads, else GC_REGISTER_THREADS, else the core count."""
        if self.threads is not None:
            return int(self.threads)
        env = os.environ.get(ENV_THREADS)
        if env:
            try:
                return max(1, int(env))
            except ValueError:
                logger.warning(f"Ignoring non-integer {ENV_THREADS}={env!r}")
        return os.cpu_count() or 1

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


FIELD_NAMES = tuple(f.name for f in fields(CliConfig))

# Field name -> coercion applied to every incoming layer value
_LIST_FLOAT = {"radius_multipliers"}
_LIST_INT = {"samples"}
_INT = {"fpfh_bins", "normal_neighbors", "ransac_iterations", "batch_size", "polish_rounds", "seed", "threads"}
_BOOL = {"voting", "single_scale", "mutual"}
_STR = {"recall_mode", "out_dir"}


def _coerce(name: str, value):
    if value is None:
        return None
    try:
        if name in _LIST_FLOAT:
            return [float(v) for v in (parse_list(value) if isinstance(value, str) else value)]
        if name in _LIST_INT:
            if isinstance(value, (int, float)):
                return [int(value)]
            return [int(v) for v in (parse_list(value) if isinstance(value, str) else value)]
        if name in _INT:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(f"{value} is not an integer")
            return int(value)
        if name in _BOOL:
            if not isinstance(value, bool):
                raise ValueError(f"{value!r} is not true/false")
            return value
        if name in _STR:
            return str(value)
        if name == "inlier_dist" and isinstance(value, str) and value in INLIER_DIST_PRESETS:
            return INLIER_DIST_PRESETS[value]
        return float(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad value for {name}: {e}") from e


def parse_list(text: str) -> List[str]:
    """'15,10,5' -> ['15', '10', '5']"""
    return [part.strip() for part in str(text).split(",") if part.strip()]


def _layer(data: Dict[str, Any], source: str, ignore_unknown: bool = False) -> Dict[str, Any]:
    out = {}
    for key, value in data.items():
        if key not in FIELD_NAMES:
            if ignore_unknown:
                logger.debug(f"{source}: ignoring key '{key}'")
                continue
            raise ConfigError(f"{source}: unknown setting '{key}'")
        out[key] = _coerce(key, value)
    return out


def _read_yaml(path: Union[str, Path], what: str) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except OSError as e:
        raise ConfigError(f"cannot read {what} {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"{what} {path} is not valid YAML: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{what} {path} must be a mapping")
    return data


def available_presets() -> List[str]:
    return sorted(p.stem for p in PRESETS_DIR.glob("*.yaml"))


def load_preset(name: str) -> Dict[str, Any]:
    """
    Settings of a named preset (data/presets/<name>.yaml) or a preset path.

    The optional 'description' key is dropped.
    """
    path = Path(name)
    if not path.suffix:
        path = PRESETS_DIR / f"{name}.yaml"
    if not path.is_file():
        raise ConfigError(f"unknown preset '{name}' (available: {', '.join(available_presets())})")
    data = _read_yaml(path, "preset")
    data.pop("description", None)
    return _layer(data, f"preset {path.name}")


def resolve(
    flags: Optional[Dict[str, Any]] = None,
    preset: Optional[str] = None,
    config_path: Optional[Union[str, Path]] = None,
    manifest_settings: Optional[Dict[str, Any]] = None,
) -> CliConfig:
    """
    Merge every configuration layer and validate the result.

    Args:
        flags: Explicit command-line values; None entries are "not given"
        preset: Preset name or path
        config_path: YAML file of CliConfig fields (e.g. a --dump-config output)
        manifest_settings: The manifest's settings block; keys that are not
            CliConfig fields are ignored

    Raises:
        ConfigError: unknown keys, bad values, unreadable files
    """
    merged: Dict[str, Any] = {}
    if preset:
        merged.update(load_preset(preset))
    if manifest_settings:
        merged.update(_layer(manifest_settings, "manifest settings", ignore_unknown=True))
    if config_path:
        merged.update(_layer(_read_yaml(config_path, "config"), f"config {config_path}"))
    if flags:
        merged.update(_layer({k: v for k, v in flags.items() if v is not None}, "flags"))

    config = CliConfig(**merged)
    config.validate()
    return config


def dump(config: CliConfig) -> str:
    """YAML text that resolve(config_path=...) turns back into the same config."""
    return yaml.safe_dump(config.to_dict(), sort_keys=False, default_flow_style=None)
