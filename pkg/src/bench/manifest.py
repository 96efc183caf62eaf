"""
Pair manifests: which clouds to register and their ground truth.

YAML layout:

    settings:              # optional, merged into the resolved config
      voxel_size: 0.05
      seed: 0
    pairs:
      - pair_id: pair_000
        source: pair_000_src.ply     # relative to the manifest file
        target: pair_000_tgt.ply
        gt: [16 numbers, row-major 4x4]
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import yaml

from cloud import ParameterError, RigidTransform

logger = logging.getLogger("gcreg.manifest")


class ManifestError(ValueError):
    """Raised when a manifest is empty, malformed or references missing files."""
    pass


@dataclass
class PairEntry:
    """One source/target pair with its ground-truth transform."""
    pair_id: str
    source: Path
    target: Path
    gt: RigidTransform

    def missing_files(self) -> List[Path]:
        return [p for p in (self.source, self.target) if not p.is_file()]


@dataclass
class PairManifest:
    pairs: List[PairEntry]
    settings: Dict[str, Any] = field(default_factory=dict)
    root: Optional[Path] = None

    def __len__(self) -> int:
        return len(self.pairs)

    def __post_init__(self):
        if not self.pairs:
            raise ManifestError("manifest has no pairs")
        ids = [p.pair_id for p in self.pairs]
        duplicates = sorted({i for i in ids if ids.count(i) > 1})
        if duplicates:
            raise ManifestError(f"duplicate pair ids: {duplicates}")


def _parse_gt(raw, pair_id: str) -> RigidTransform:
    try:
        values = [float(v) for v in raw]
    except (TypeError, ValueError) as e:
        raise ManifestError(f"pair '{pair_id}': gt must be a list of 16 numbers ({e})") from e
    if len(values) != 16:
        raise ManifestError(f"pair '{pair_id}': gt needs 16 numbers, got {len(values)}")
    try:
        return RigidTransform.from_matrix(values, project=True)
    except ParameterError as e:
        raise ManifestError(f"pair '{pair_id}': invalid gt: {e}") from e


def load_manifest(path: Union[str, Path], strict: bool = True) -> PairManifest:
    """
    Load and validate a manifest.

    Args:
        path: YAML file
        strict: raise on missing cloud files; otherwise log a warning and
            leave the pair to fail at run time

    Raises:
        ManifestError: empty, malformed, bad gt, or (strict) missing files
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except OSError as e:
        raise ManifestError(f"cannot read manifest {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ManifestError(f"manifest {path} is not valid YAML: {e}") from e

    if not isinstance(data, dict) or not isinstance(data.get("pairs"), list):
        raise ManifestError(f"manifest {path} needs a top-level 'pairs' list")
    settings = data.get("settings") or {}
    if not isinstance(settings, dict):
        raise ManifestError(f"manifest {path}: 'settings' must be a mapping")

    root = path.resolve().parent
    entries = []
    for k, item in enumerate(data["pairs"]):
        if not isinstance(item, dict) or not {"source", "target", "gt"} <= set(item):
            raise ManifestError(f"manifest {path}: pair #{k} needs source, target and gt")
        pair_id = str(item.get("pair_id", f"pair_{k:03d}"))
        entry = PairEntry(
            pair_id=pair_id,
            source=(root / str(item["source"])),
            target=(root / str(item["target"])),
            gt=_parse_gt(item["gt"], pair_id),
        )
        missing = entry.missing_files()
        if missing:
            message = f"pair '{pair_id}': missing file(s) {[str(m) for m in missing]}"
            if strict:
                raise ManifestError(message)
            logger.warning(message)
        entries.append(entry)

    manifest = PairManifest(entries, settings, root)
    logger.info(f"Loaded manifest {path} with {len(manifest)} pairs")
    return manifest


def save_manifest(manifest: PairManifest, path: Union[str, Path]):
    """Write a manifest; cloud paths are stored relative to its directory."""
    path = Path(path)
    root = path.resolve().parent

    def rel(p: Path) -> str:
        try:
            return Path(p).resolve().relative_to(root).as_posix()
        except ValueError:
            return str(p)

    data = {
        "settings": dict(manifest.settings),
        "pairs": [
            {
                "pair_id": e.pair_id,
                "source": rel(e.source),
                "target": rel(e.target),
                "gt": e.gt.to_list(),
            }
            for e in manifest.pairs
        ],
    }
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(data, f, sort_keys=False, default_flow_style=None)
