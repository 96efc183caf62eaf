"""
GC-Register Suites
==================

Runs a manifest of pairs through the pipeline and aggregates the results.

Reports always come back in manifest order, whatever the thread count.
Every aggregate is computed from fields that also appear in the CSV, so
re-reading the CSV with read_csv and summarizing again gives the same
numbers as the JSON summary.
"""

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import yaml

from cloud import ParameterError, PointCloud, RigidTransform
from evaluation import (
    CSV_COLUMNS,
    EvalThresholds,
    RecallMode,
    RegistrationReport,
    feature_matching_recall,
    is_success,
    registration_recall,
    rre,
    rte,
    transform_rmse,
)
from settings import METRIC_CONVENTIONS, PROJECT_NAME, SCHEMA_VERSION, VERSION
from .cloud_io import CloudParseError, read_cloud
from .manifest import ManifestError, PairEntry, PairManifest
from .pipeline import PipelineConfig, pair_seed, run_pair

logger = logging.getLogger("gcreg.suite")

PathLike = Union[str, Path]


@dataclass
class SuiteResult:
    """Per-pair reports in manifest order plus the aggregate summary."""
    reports: List[RegistrationReport]
    summary: Dict[str, Any]
    config: Dict[str, Any] = field(default_factory=dict)


# =============================================================================
# RUNNING
# =============================================================================

def _run_entry(entry: PairEntry, config: PipelineConfig, seed: int) -> RegistrationReport:
    try:
        source = read_cloud(entry.source)
        target = read_cloud(entry.target)
    except (OSError, CloudParseError) as e:
        report = RegistrationReport(pair_id=entry.pair_id)
        report.mark_failed("load", e)
        logger.warning(f"[{entry.pair_id}] cannot load clouds: {e}")
        return report
    return run_pair(source, target, entry.gt, config, pair_id=entry.pair_id, seed=seed)


def run_suite(
    manifest: PairManifest,
    config: Optional[PipelineConfig] = None,
    threads: int = 1,
) -> SuiteResult:
    """
    Register every pair of a manifest.

    Pair k uses seed config.seed + k, so results do not depend on which
    worker ran which pair.

    Args:
        manifest: Validated PairManifest (non-empty)
        config: PipelineConfig shared by every pair
        threads: Worker count; 1 runs sequentially

    Raises:
        ManifestError: empty manifest
        ParameterError: threads < 1
    """
    config = PipelineConfig() if config is None else config
    if len(manifest) == 0:
        raise ManifestError("manifest has no pairs")
    if threads < 1:
        raise ParameterError(f"threads must be >= 1, got {threads}")

    seeds = [pair_seed(config.seed, k) for k in range(len(manifest))]
    logger.info(f"Running {len(manifest)} pairs on {threads} thread(s)")
    if threads == 1:
        reports = [_run_entry(e, config, s) for e, s in zip(manifest.pairs, seeds)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(lambda job: _run_entry(job[0], config, job[1]), zip(manifest.pairs, seeds)))

    summary = summarize(reports, config.thresholds, config.recall_mode)
    logger.info(
        f"Suite done: RR {summary['rr']}, median IR {summary['ir_median']}, "
        f"{summary['failed']} failed"
    )
    return SuiteResult(reports, summary, config.to_dict())


def run_sweep(
    manifest: PairManifest,
    config: PipelineConfig,
    sample_counts: Sequence[int],
    threads: int = 1,
) -> List[Tuple[int, SuiteResult]]:
    """Run the suite once per sample count, in the order given."""
    results = []
    for count in sample_counts:
        swept = replace(config, sample_count=int(count))
        logger.info(f"Sample-count sweep: K = {count}")
        results.append((int(count), run_suite(manifest, swept, threads)))
    return results


# =============================================================================
# AGGREGATES
# =============================================================================

def _mean(values: List[float]) -> Optional[float]:
    return math.fsum(values) / len(values) if values else None


def summarize(
    reports: Sequence[RegistrationReport],
    thresholds: Optional[EvalThresholds] = None,
    mode=RecallMode.RMSE,
) -> Dict[str, Any]:
    """
    Suite-level aggregates.

    IR and FMR run over pairs that reached matching with ground truth.
    rre_mean / rte_mean cover successful registrations only (under the
    active recall mode); the all_* means cover every pair with a pose.
    """
    thresholds = EvalThresholds() if thresholds is None else thresholds
    mode = RecallMode(mode)
    reports = list(reports)
    if not reports:
        raise ManifestError("cannot summarize an empty suite")

    irs = [r.ir for r in reports if r.ir is not None]
    posed = [r for r in reports if r.status == "ok" and r.rre is not None]
    successes = [r for r in posed if is_success(r, thresholds, mode)]

    return {
        "pairs": len(reports),
        "failed": sum(1 for r in reports if r.status != "ok"),
        "recall_mode": mode.value,
        "ir_mean": _mean(irs),
        "ir_median": float(np.median(irs)) if irs else None,
        "fmr": feature_matching_recall(irs, thresholds.fmr_min_ir) if irs else None,
        "rr": registration_recall(reports, thresholds, mode),
        "rr_rmse": registration_recall(reports, thresholds, RecallMode.RMSE),
        "rr_rre_rte": registration_recall(reports, thresholds, RecallMode.RRE_RTE),
        "rre_mean": _mean([r.rre for r in successes]),
        "rte_mean": _mean([r.rte for r in successes]),
        "all_rre_mean": _mean([r.rre for r in posed]),
        "all_rte_mean": _mean([r.rte for r in posed]),
        "all_rmse_mean": _mean([r.rmse for r in posed if r.rmse is not None]),
        "proposed_mean": _mean([float(r.proposed) for r in reports]),
        "accepted_mean": _mean([float(r.accepted) for r in reports]),
    }


# =============================================================================
# OUTPUT
# =============================================================================

def write_json(result: SuiteResult, path: PathLike, include_timings: bool = True):
    """One JSON document: header, resolved config, summary, per-pair reports."""
    document = {
        "schema_version": SCHEMA_VERSION,
        "tool": PROJECT_NAME,
        "version": VERSION,
        "conventions": METRIC_CONVENTIONS,
        "config": result.config,
        "summary": result.summary,
        "pairs": [r.to_dict(include_timings) for r in result.reports],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(document, f, indent=2)
        f.write("\n")


def write_csv(reports: Sequence[RegistrationReport], path: PathLike):
    """One row per pair, fixed column order, no timings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for report in reports:
            writer.writerow(report.csv_row())


_INT_COLUMNS = {"num_source", "num_target", "proposed", "accepted", "inliers", "ransac_iterations"}
_BOOL_COLUMNS = {"success_rmse", "success_rre_rte"}
_TEXT_COLUMNS = {"pair_id", "status", "failure_stage"}


def _parse_cell(column: str, text: str):
    if text == "":
        return None
    if column in _TEXT_COLUMNS:
        return text
    if column in _INT_COLUMNS:
        return int(text)
    if column in _BOOL_COLUMNS:
        return text == "1"
    return float(text)


def read_csv(path: PathLike) -> List[RegistrationReport]:
    """Reports rebuilt from a suite CSV (CSV columns only)."""
    with open(path, "r", encoding="utf-8", newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != CSV_COLUMNS:
        raise ValueError(f"{path}: unexpected CSV header")
    reports = []
    for row in rows[1:]:
        data = {c: _parse_cell(c, v) for c, v in zip(CSV_COLUMNS, row)}
        reports.append(RegistrationReport(**data))
    return reports


def write_sweep_csv(results: Sequence[Tuple[int, SuiteResult]], path: PathLike):
    """One summary row per sample count."""
    keys = ["sample_count", "rr", "ir_mean", "ir_median", "fmr", "accepted_mean"]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(keys)
        for count, result in results:
            values = [count] + [result.summary[k] for k in keys[1:]]
            writer.writerow(["" if v is None else (format(v, ".17g") if isinstance(v, float) else v)
                             for v in values])


# =============================================================================
# ESTIMATES (bench output, eval input)
# =============================================================================

def write_estimates(reports: Sequence[RegistrationReport], path: PathLike):
    """YAML list of {pair_id, transform}; transform is null for failed pairs."""
    data = {"estimates": [{"pair_id": r.pair_id, "transform": r.transform} for r in reports]}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(data, f, sort_keys=False, default_flow_style=None)


def read_estimates(path: PathLike) -> List[Tuple[str, Optional[RigidTransform]]]:
    """
    Load an estimates file written by write_estimates.

    Raises:
        ManifestError: unreadable or malformed file
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except (OSError, yaml.YAMLError) as e:
        raise ManifestError(f"cannot read estimates {path}: {e}") from e
    if not isinstance(data, dict) or not isinstance(data.get("estimates"), list):
        raise ManifestError(f"estimates {path} needs a top-level 'estimates' list")

    out = []
    for k, item in enumerate(data["estimates"]):
        if not isinstance(item, dict) or "pair_id" not in item:
            raise ManifestError(f"estimates {path}: row #{k} needs pair_id and transform")
        raw = item.get("transform")
        try:
            transform = None if raw is None else RigidTransform.from_matrix(raw, project=True)
        except ParameterError as e:
            raise ManifestError(f"estimates {path}: row '{item['pair_id']}': {e}") from e
        out.append((str(item["pair_id"]), transform))
    return out


def evaluate_estimates(
    manifest: PairManifest,
    estimates: Sequence[Tuple[str, Optional[RigidTransform]]],
    thresholds: Optional[EvalThresholds] = None,
    mode=RecallMode.RMSE,
) -> SuiteResult:
    """
    Score externally estimated transforms against manifest ground truth.

    RMSE is taken over the source cloud when its file is readable.

    Raises:
        ManifestError: row count or pair ids do not line up with the manifest
    """
    thresholds = EvalThresholds() if thresholds is None else thresholds
    if len(estimates) != len(manifest):
        raise ManifestError(f"{len(estimates)} estimates for {len(manifest)} manifest pairs")

    reports = []
    for entry, (pair_id, estimate) in zip(manifest.pairs, estimates):
        if pair_id != entry.pair_id:
            raise ManifestError(f"estimate '{pair_id}' does not line up with manifest pair '{entry.pair_id}'")
        report = RegistrationReport(pair_id=pair_id)
        if estimate is None:
            report.mark_failed("estimate", ValueError("no transform"))
            reports.append(report)
            continue
        report.transform = estimate.to_list()
        report.rre = rre(estimate, entry.gt)
        report.rte = rte(estimate, entry.gt)
        source = _try_read(entry.source)
        if source is not None and len(source):
            report.num_source = len(source)
            report.rmse = transform_rmse(source, estimate, entry.gt)
        report.success_rmse = is_success(report, thresholds, RecallMode.RMSE)
        report.success_rre_rte = is_success(report, thresholds, RecallMode.RRE_RTE)
        reports.append(report)

    summary = summarize(reports, thresholds, mode)
    return SuiteResult(reports, summary, {"thresholds": thresholds.to_dict(), "recall_mode": RecallMode(mode).value})


def _try_read(path: Path) -> Optional[PointCloud]:
    try:
        return read_cloud(path)
    except (OSError, CloudParseError) as e:
        logger.warning(f"cannot read {path} for rmse: {e}")
        return None

