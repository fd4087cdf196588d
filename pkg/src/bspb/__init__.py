"""Tricubic B-spline orbital evaluation kernels and benchmark harness."""

__version__ = "0.1.0"

from .coeffs import (
    CoeffTableAoS,
    CoeffTableSoA,
    FillSpec,
    TiledCoeffTable,
    build_table,
    convert_aos_to_soa,
    dump_table,
    load_table,
    memory_footprint,
    tile_table,
)
from .grid import (
    BasisWeights,
    GridPoint,
    GridSpec,
    basis_weights,
    basis_weights_batch,
    compute_prefactors,
    map_to_grid,
)
from .kernels import (
    KernelKind,
    WalkerOutputsAoS,
    WalkerOutputsSoA,
    allocate_outputs,
    collect_streams,
    eval_batch,
    eval_tiled,
    eval_v,
    eval_vgh,
    eval_vgl,
)

__all__ = [
    "BasisWeights",
    "CoeffTableAoS",
    "CoeffTableSoA",
    "FillSpec",
    "GridPoint",
    "GridSpec",
    "KernelKind",
    "TiledCoeffTable",
    "WalkerOutputsAoS",
    "WalkerOutputsSoA",
    "__version__",
    "allocate_outputs",
    "basis_weights",
    "basis_weights_batch",
    "build_table",
    "collect_streams",
    "compute_prefactors",
    "convert_aos_to_soa",
    "dump_table",
    "eval_batch",
    "eval_tiled",
    "eval_v",
    "eval_vgh",
    "eval_vgl",
    "load_table",
    "map_to_grid",
    "memory_footprint",
    "tile_table",
]
