"""Instrumented evaluation that counts memory touches and arithmetic.

A slow mirror of the kernels used to pin down the analytic traffic model:
64 coefficient rows and 64*N coefficient elements are read per evaluation,
each output stream element is written once (1N / 5N / 10N streams for
V / VGL / VGH in SoA form, 13N for the AoS Hessian layout), and every
accumulation is one fused multiply-add, 64 * streams * N in total.

The mirror reuses the kernels' float32 weights and performs the identical
per-lane float32 operations, so its outputs match the fast kernels bit for
bit; tests rely on that to prove the counters describe the real kernels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coeffs import CoeffTableAoS, CoeffTableSoA, TiledCoeffTable
from .errors import ContractError
from .grid import compute_prefactors
from .kernels import KernelKind


@dataclass
class AccessCounts:
    coeff_rows: int = 0
    coeff_elements: int = 0
    output_elements: int = 0
    fma_ops: int = 0
    stream_writes: dict = field(default_factory=dict)

    def merge(self, other: "AccessCounts") -> None:
        self.coeff_rows += other.coeff_rows
        self.coeff_elements += other.coeff_elements
        self.output_elements += other.output_elements
        self.fma_ops += other.fma_ops
        for name, count in other.stream_writes.items():
            self.stream_writes[name] = self.stream_writes.get(name, 0) + count


_AOS_HESSIAN_STREAMS = (
    ("hxx", "hxx"), ("hxy", "hxy"), ("hxz", "hxz"),
    ("hyx", "hxy"), ("hyy", "hyy"), ("hyz", "hyz"),
    ("hzx", "hxz"), ("hzy", "hyz"), ("hzz", "hzz"),
)


def _count_single(table, kind: KernelKind, pos, layout: str):
    n = table.n_splines
    point, (wx, wy, wz) = compute_prefactors(pos, table.grid)
    grid = table.grid
    ix = (point.i0 - 1 + np.arange(4)) % grid.nx
    iy = (point.j0 - 1 + np.arange(4)) % grid.ny
    iz = (point.k0 - 1 + np.arange(4)) % grid.nz

    if kind is KernelKind.V:
        accum = {"v": ("a", "a", "a")}
    elif kind is KernelKind.VGL:
        accum = {
            "v": ("a", "a", "a"),
            "gx": ("da", "a", "a"),
            "gy": ("a", "da", "a"),
            "gz": ("a", "a", "da"),
        }
    else:
        accum = {
            "v": ("a", "a", "a"),
            "gx": ("da", "a", "a"),
            "gy": ("a", "da", "a"),
            "gz": ("a", "a", "da"),
            "hxx": ("d2a", "a", "a"),
            "hxy": ("da", "da", "a"),
            "hxz": ("da", "a", "da"),
            "hyy": ("a", "d2a", "a"),
            "hyz": ("a", "da", "da"),
            "hzz": ("a", "a", "d2a"),
        }

    out = {name: np.zeros(n, dtype=np.float32) for name in accum}
    if kind is KernelKind.VGL:
        out["l"] = np.zeros(n, dtype=np.float32)
    counts = AccessCounts()
    for i in range(4):
        for j in range(4):
            for k in range(4):
                if layout == "aos":
                    row = table.data[:, ix[i], iy[j], iz[k]]
                else:
                    row = table.data[ix[i], iy[j], iz[k], :n]
                counts.coeff_rows += 1
                counts.coeff_elements += n
                for name, (fx, fy, fz) in accum.items():
                    pre = getattr(wx, fx)[i] * getattr(wy, fy)[j] * getattr(wz, fz)[k]
                    out[name] += pre * row
                if kind is KernelKind.VGL:
                    # Laplacian prefactor as in the kernel: three
                    # second-derivative products summed before the FMA
                    lap = (
                        wx.d2a[i] * wy.a[j] * wz.a[k]
                        + wx.a[i] * wy.d2a[j] * wz.a[k]
                        + wx.a[i] * wy.a[j] * wz.d2a[k]
                    )
                    out["l"] += lap * row

    if kind is KernelKind.VGH and layout == "aos":
        # the interleaved Hessian stores all nine entries; each is its own
        # accumulation stream even though only six values are distinct
        stream_list = [("v", "v"), ("gx", "gx"), ("gy", "gy"), ("gz", "gz")]
        stream_list += list(_AOS_HESSIAN_STREAMS)
    elif kind is KernelKind.V:
        stream_list = [("v", "v")]
    elif kind is KernelKind.VGL:
        stream_list = [(s, s) for s in ("v", "gx", "gy", "gz", "l")]
    else:
        stream_list = [(s, s) for s in KernelKind.VGH.stream_names]

    for write_name, _ in stream_list:
        counts.stream_writes[write_name] = n
    counts.output_elements = n * len(stream_list)
    counts.fma_ops = 64 * n * len(stream_list)
    streams = {write_name: out[src].copy() for write_name, src in stream_list}
    return streams, counts


def evaluate_counted(table, kind: KernelKind, pos):
    """Evaluate one position while counting accesses.

    Returns (streams, AccessCounts).  Streams carry the SoA naming; for AoS
    VGH the nine Hessian entries appear under hxx..hzz plus the mirrored
    hyx/hzx/hzy names.  Tiled tables report per-tile rows summed (64 per
    tile) while element counts still total 64*N.
    """
    if isinstance(table, TiledCoeffTable):
        total = AccessCounts()
        parts = []
        for tile in table.tiles:
            streams, counts = _count_single(tile, kind, pos, "soa")
            parts.append(streams)
            total.merge(counts)
        merged = {
            name: np.concatenate([p[name] for p in parts]) for name in parts[0]
        }
        return merged, total
    if isinstance(table, CoeffTableSoA):
        return _count_single(table, kind, pos, "soa")
    if isinstance(table, CoeffTableAoS):
        return _count_single(table, kind, pos, "aos")
    raise ContractError(f"unsupported table type {type(table).__name__}")
