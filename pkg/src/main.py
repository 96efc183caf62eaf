#!/usr/bin/env python3
"""
GC-Register - Consistent-Voting Point Cloud Registration
========================================================

Entry Point
-----------
Sub-commands:
    register  SOURCE TARGET     register one pair, write a JSON report
    bench     MANIFEST          run a suite, write summary JSON + per-pair CSV
    gen       OUT_DIR           write synthetic pairs and their manifest
    eval      ESTIMATES MANIFEST  score estimated transforms against ground truth

Exit codes: 0 success, 1 parse / config / I/O error, 2 registration failure.
stdout carries data, stderr carries diagnostics (JSON with --json).

Run with:
    PYTHONPATH=src python -m main register a.ply b.ply
    python src/main.py bench data/suite/manifest.yaml --threads 4
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

# src/ is the import root
sys.path.insert(0, str(Path(__file__).resolve().parent))

from bench import (
    CloudParseError,
    ManifestError,
    SuiteResult,
    SynthConfig,
    evaluate_estimates,
    load_manifest,
    read_cloud,
    read_estimates,
    run_pair,
    run_suite,
    run_sweep,
    write_csv,
    write_estimates,
    write_json,
    write_sweep_csv,
    write_synthetic_suite,
)
from cloud import ParameterError, RigidTransform
from config import ConfigError, dump, resolve
from settings import ENV_DEBUG, LOG_FORMAT, SYNTH_CONFIG

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NO_CONSENSUS = 2

logger = logging.getLogger("gcreg.main")


def debug_enabled() -> bool:
    return os.environ.get(ENV_DEBUG, "").strip().lower() not in ("", "0", "false", "no")


class CommandError(Exception):
    """Raised by a command to end with a given exit code and message."""

    def __init__(self, message: str, code: int = EXIT_ERROR):
        super().__init__(message)
        self.code = code


def setup_logging(json_mode: bool = False):
    """
    Root handler on stderr.

    GC_REGISTER_DEBUG switches to DEBUG; --json keeps stderr to warnings
    and the final error document.
    """
    if debug_enabled():
        level = logging.DEBUG
    elif json_mode:
        level = logging.WARNING
    else:
        level = logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


# =============================================================================
# ARGUMENTS
# =============================================================================

class _Parser(argparse.ArgumentParser):
    """Usage errors exit 1 like every other parse error."""

    def error(self, message):
        raise CommandError(f"{self.prog}: {message}")


def _common_flags() -> argparse.ArgumentParser:
    """Pipeline flags shared by every sub-command; each maps to one CliConfig field."""
    p = _Parser(add_help=False)
    g = p.add_argument_group("pipeline")
    g.add_argument("--voxel", dest="voxel_size", type=float, help="voxel size (dataset units)")
    g.add_argument("--radii", dest="radius_multipliers", help="comma list of radius multipliers, e.g. 15,10,5")
    g.add_argument("--dtol-mult", dest="dtol_mult", type=float, help="voting tolerance as a multiple of voxel")
    g.add_argument("--samples", dest="samples", help="sampled points; a comma list runs a sweep (bench)")
    g.add_argument("--ransac-iters", dest="ransac_iterations", type=int, help="RANSAC iteration cap")
    g.add_argument("--inlier-thresh", dest="inlier_threshold", type=float, help="RANSAC inlier distance")
    g.add_argument("--inlier-dist", dest="inlier_dist",
                   help="ground-truth inlier distance: a length, or strict | standard")
    g.add_argument("--polish-rounds", dest="polish_rounds", type=int,
                   help="consensus refits on the full clouds after refine (0 disables)")
    g.add_argument("--seed", dest="seed", type=int, help="base seed")
    g.add_argument("--threads", dest="threads", type=int, help="suite worker threads")
    g.add_argument("--no-voting", dest="voting", action="store_false", default=None,
                   help="plain level-1 matching instead of consistent voting")
    g.add_argument("--single-scale", dest="single_scale", action="store_true", default=None,
                   help="extract only the first descriptor level")
    g.add_argument("--mutual", dest="mutual", action="store_true", default=None,
                   help="mutual nearest-neighbor check after filtering")
    g.add_argument("--recall-mode", dest="recall_mode", choices=["rmse", "rre_rte"],
                   help="how a registration counts as successful")
    g.add_argument("--out-dir", dest="out_dir", help="output directory")

    c = p.add_argument_group("configuration")
    c.add_argument("--preset", help="indoor | outdoor | object, or a preset YAML path")
    c.add_argument("--config", dest="config_path", help="YAML file of settings (e.g. from --dump-config)")
    c.add_argument("--dump-config", action="store_true", help="print the resolved config as YAML and exit")
    c.add_argument("--json", dest="json_mode", action="store_true", help="JSON on stdout, JSON errors on stderr")
    return p


_FLAG_FIELDS = (
    "voxel_size", "radius_multipliers", "dtol_mult", "samples", "ransac_iterations",
    "inlier_threshold", "inlier_dist", "polish_rounds", "seed", "threads", "voting",
    "single_scale", "mutual", "recall_mode", "out_dir",
)


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = _Parser(
        prog="gc-register",
        description="Point cloud registration with multi-scale consistent voting.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    reg = sub.add_parser("register", parents=[common], help="register one pair")
    reg.add_argument("source")
    reg.add_argument("target")
    reg.add_argument("--gt", help="file with 16 numbers (row-major 4x4) for error metrics")
    reg.add_argument("--report", help="report path (default OUT_DIR/register.json)")

    bench = sub.add_parser("bench", parents=[common], help="run a manifest suite")
    bench.add_argument("manifest")

    gen = sub.add_parser("gen", parents=[common], help="write synthetic pairs")
    gen.add_argument("output")
    gen.add_argument("--pairs", type=int, default=10)
    gen.add_argument("--n-points", type=int, default=None)
    gen.add_argument("--overlap", type=float, default=None)
    gen.add_argument("--noise", type=float, default=None, help="noise sigma (length)")
    gen.add_argument("--noise-voxels", type=float, default=None, help="noise sigma as a multiple of --voxel")
    gen.add_argument("--max-rotation", type=float, default=None, help="degrees")
    gen.add_argument("--max-translation", type=float, default=None)
    gen.add_argument("--shape", choices=["sphere", "box-room", "random-surface"], default=None)
    gen.add_argument("--ascii", action="store_true", help="ASCII PLY instead of binary")

    ev = sub.add_parser("eval", parents=[common], help="score estimated transforms")
    ev.add_argument("estimates")
    ev.add_argument("manifest")
    return parser


def _flags(args: argparse.Namespace) -> Dict[str, Any]:
    return {name: getattr(args, name, None) for name in _FLAG_FIELDS}


def _resolve(args, manifest_settings: Optional[dict] = None):
    return resolve(_flags(args), args.preset, args.config_path, manifest_settings)


def _emit(args, text: str, document: Optional[dict] = None):
    """stdout: the document as JSON with --json, else the human line."""
    if args.json_mode and document is not None:
        print(json.dumps(document, indent=2))
    else:
        print(text)


def _dump_and_exit(args, config) -> bool:
    if not args.dump_config:
        return False
    sys.stdout.write(dump(config))
    return True


# =============================================================================
# COMMANDS
# =============================================================================

def _read_gt(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
        values = [float(v) for v in text.replace(",", " ").split()]
        return RigidTransform.from_matrix(values, project=True)
    except (OSError, ValueError, ParameterError) as e:
        raise CommandError(f"cannot read ground truth {path}: {e}") from e


def cmd_register(args) -> int:
    config = _resolve(args)
    if _dump_and_exit(args, config):
        return EXIT_OK
    try:
        source = read_cloud(args.source)
        target = read_cloud(args.target)
    except (OSError, CloudParseError) as e:
        raise CommandError(f"{e}") from e
    gt = _read_gt(args.gt) if args.gt else None

    report = run_pair(source, target, gt, config.pipeline(), pair_id=Path(args.source).stem)
    result = SuiteResult([report], {}, config.to_dict())
    report_path = Path(args.report) if args.report else Path(config.out_dir) / "register.json"
    write_json(result, report_path)

    if report.status != "ok":
        code = EXIT_NO_CONSENSUS if report.failure_stage in ("ransac", "refine") else EXIT_ERROR
        raise CommandError(f"registration failed at {report.failure_stage}: {report.error}", code)

    line = (
        f"{report.pair_id}: {report.inliers} inliers / {report.accepted} accepted / "
        f"{report.proposed} proposed"
    )
    if report.rre is not None:
        line += f", RRE {report.rre:.3f} deg, RTE {report.rte:.4f}"
    line += f", T = {[round(v, 6) for v in report.transform]}"
    _emit(args, line, report.to_dict())
    logger.info(f"Report written to {report_path}")
    return EXIT_OK


def cmd_bench(args) -> int:
    manifest = load_manifest(args.manifest, strict=False)
    config = _resolve(args, manifest.settings)
    if _dump_and_exit(args, config):
        return EXIT_OK

    out = Path(config.out_dir)
    threads = config.resolved_threads()
    if len(config.samples) > 1:
        results = run_sweep(manifest, config.pipeline(), config.samples, threads)
        write_sweep_csv(results, out / "sweep.csv")
        for count, result in results:
            write_json(result, out / f"summary_k{count}.json")
            write_csv(result.reports, out / f"pairs_k{count}.csv")
        rows = [{"sample_count": count, **result.summary} for count, result in results]
        _emit(args, "\n".join(_summary_line(r, f"K={r['sample_count']}") for r in rows), {"sweep": rows})
        return EXIT_OK

    result = run_suite(manifest, config.pipeline(), threads)
    write_json(result, out / "summary.json")
    write_csv(result.reports, out / "pairs.csv")
    write_estimates(result.reports, out / "estimates.yaml")
    _emit(args, _summary_line(result.summary), result.summary)
    return EXIT_OK


def _summary_line(summary: dict, prefix: str = "suite") -> str:
    def fmt(key, spec=".4f"):
        value = summary.get(key)
        return "n/a" if value is None else format(value, spec)

    return (
        f"{prefix}: {summary['pairs']} pairs, {summary['failed']} failed, "
        f"RR({summary['recall_mode']}) {fmt('rr')}, IR mean {fmt('ir_mean')} median {fmt('ir_median')}, "
        f"FMR {fmt('fmr')}, RRE {fmt('rre_mean', '.3f')} deg, RTE {fmt('rte_mean')}"
    )


def cmd_gen(args) -> int:
    config = _resolve(args)
    if _dump_and_exit(args, config):
        return EXIT_OK
    voxel = args.voxel_size if args.voxel_size is not None else SYNTH_CONFIG['voxel_size']

    noise = args.noise
    if args.noise_voxels is not None:
        noise = args.noise_voxels * voxel
    overrides = {
        "n_points": args.n_points,
        "overlap_frac": args.overlap,
        "noise_sigma": noise,
        "max_rotation": args.max_rotation,
        "max_translation": args.max_translation,
        "shape": args.shape,
        "seed": config.seed,
    }
    synth = SynthConfig(**{k: v for k, v in overrides.items() if v is not None})
    try:
        manifest, path = write_synthetic_suite(args.output, args.pairs, synth, voxel, binary=not args.ascii)
    except OSError as e:
        raise CommandError(f"cannot write to {args.output}: {e}") from e
    _emit(args, f"wrote {len(manifest)} pairs, manifest {path}", {"pairs": len(manifest), "manifest": str(path)})
    return EXIT_OK


def cmd_eval(args) -> int:
    manifest = load_manifest(args.manifest, strict=False)
    config = _resolve(args, manifest.settings)
    if _dump_and_exit(args, config):
        return EXIT_OK
    estimates = read_estimates(args.estimates)
    result = evaluate_estimates(manifest, estimates, config.thresholds(), config.recall_mode)

    out = Path(config.out_dir)
    write_json(result, out / "eval.json")
    write_csv(result.reports, out / "eval.csv")
    if not args.json_mode:
        for r in result.reports:
            rre = "n/a" if r.rre is None else f"{r.rre:.4f}"
            rte = "n/a" if r.rte is None else f"{r.rte:.5f}"
            print(f"{r.pair_id}\t{r.status}\tRRE {rre}\tRTE {rte}")
    _emit(args, _summary_line(result.summary, "eval"), result.summary)
    return EXIT_OK


COMMANDS = {
    "register": cmd_register,
    "bench": cmd_bench,
    "gen": cmd_gen,
    "eval": cmd_eval,
}


# =============================================================================
# ENTRY
# =============================================================================

def _fail(args, code: int, error: BaseException) -> int:
    if getattr(args, "json_mode", False):
        sys.stderr.write(json.dumps({
            "error": str(error),
            "type": type(error).__name__,
            "exit_code": code,
        }) + "\n")
    else:
        logger.error(str(error))
    return code


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments, run one command, map errors to exit codes.

    Set GC_REGISTER_DEBUG=1 to re-raise unexpected errors with a traceback.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except CommandError as e:
        json_mode = "--json" in (sys.argv[1:] if argv is None else argv)
        setup_logging(json_mode)
        return _fail(argparse.Namespace(json_mode=json_mode), e.code, e)
    setup_logging(args.json_mode)

    try:
        return COMMANDS[args.command](args)
    except CommandError as e:
        return _fail(args, e.code, e)
    except (ConfigError, ManifestError, CloudParseError, ParameterError, OSError) as e:
        return _fail(args, EXIT_ERROR, e)
    except KeyboardInterrupt:
        return _fail(args, EXIT_ERROR, RuntimeError("interrupted"))
    except Exception as e:
        if debug_enabled():
            raise
        return _fail(args, EXIT_ERROR, e)


if __name__ == '__main__':
    sys.exit(main())
