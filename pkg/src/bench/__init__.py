"""
GC-Register Bench
=================

Everything around the algorithm that turns it into a benchmark:
- PLY / XYZ reading and writing
- Synthetic pairs with exact ground truth
- Pair manifests
- The per-pair pipeline and suite runner with JSON / CSV reports
"""

from .cloud_io import (
    CloudFormat,
    CloudParseError,
    parse_ply,
    parse_xyz,
    ply_bytes,
    read_cloud,
    write_cloud,
    xyz_bytes,
)

from .manifest import (
    ManifestError,
    PairEntry,
    PairManifest,
    load_manifest,
    save_manifest,
)

from .synth import (
    Shape,
    SynthConfig,
    SynthPair,
    random_transform,
    synth_pair,
    write_synthetic_suite,
)

from .pipeline import (
    PipelineConfig,
    register,
    run_pair,
)

from .suite import (
    SuiteResult,
    evaluate_estimates,
    read_csv,
    read_estimates,
    run_suite,
    run_sweep,
    summarize,
    write_csv,
    write_estimates,
    write_json,
    write_sweep_csv,
)

__all__ = [
    # Cloud files
    "CloudFormat",
    "CloudParseError",
    "parse_ply",
    "parse_xyz",
    "ply_bytes",
    "read_cloud",
    "write_cloud",
    "xyz_bytes",

    # Manifests
    "ManifestError",
    "PairEntry",
    "PairManifest",
    "load_manifest",
    "save_manifest",

    # Synthetic data
    "Shape",
    "SynthConfig",
    "SynthPair",
    "random_transform",
    "synth_pair",
    "write_synthetic_suite",

    # Pipeline
    "PipelineConfig",
    "register",
    "run_pair",

    # Suites
    "SuiteResult",
    "evaluate_estimates",
    "read_csv",
    "read_estimates",
    "run_suite",
    "run_sweep",
    "summarize",
    "write_csv",
    "write_estimates",
    "write_json",
    "write_sweep_csv",
]
