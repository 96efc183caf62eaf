"""
GC-Register Features
====================

Handcrafted local descriptors:
- PPF quadruples between oriented point pairs
- FPFH histograms at one or several radii (the multi-level features)
"""

from .ppf import (
    PpfQuadruple,
    ppf,
    ppf_batch,
    ppf_patch,
)

from .descriptors import (
    DescriptorSet,
    MultiScaleDescriptors,
)

from .fpfh import (
    bin_features,
    fpfh,
    multiscale_fpfh,
    pair_features,
)

__all__ = [
    # PPF
    "PpfQuadruple",
    "ppf",
    "ppf_batch",
    "ppf_patch",

    # Descriptor containers
    "DescriptorSet",
    "MultiScaleDescriptors",

    # FPFH
    "bin_features",
    "fpfh",
    "multiscale_fpfh",
    "pair_features",
]
