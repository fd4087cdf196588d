"""Double-precision reference evaluation, the ground truth for every
tolerance check in the test suite.

Deliberately unsophisticated: gather the 4x4x4 coefficient block for the
stencil, walk it with a plain triple loop and float64 weights.  Shares no
storage tricks or single-precision shortcuts with the production kernels.
"""

from __future__ import annotations

import math

import numpy as np

from .coeffs import CoeffTableAoS, CoeffTableSoA, TiledCoeffTable
from .errors import ContractError, DomainError
from .kernels import KernelKind


def axis_weights_f64(t: float, delta: float = 1.0):
    """Float64 basis weights (a, da, d2a) for offset t in [0, 1)."""
    if not (0.0 <= t < 1.0):
        raise DomainError(f"t={t!r} outside [0, 1)")
    s = 1.0 - t
    a = np.array(
        [
            s ** 3 / 6.0,
            (3.0 * t ** 3 - 6.0 * t ** 2 + 4.0) / 6.0,
            (-3.0 * t ** 3 + 3.0 * t ** 2 + 3.0 * t + 1.0) / 6.0,
            t ** 3 / 6.0,
        ]
    )
    da = np.array(
        [
            -3.0 * s ** 2 / 6.0,
            (9.0 * t ** 2 - 12.0 * t) / 6.0,
            (-9.0 * t ** 2 + 6.0 * t + 3.0) / 6.0,
            3.0 * t ** 2 / 6.0,
        ]
    ) / delta
    d2a = np.array([s, 3.0 * t - 2.0, 1.0 - 3.0 * t, t]) / delta ** 2
    return a, da, d2a


def _map_axis_f64(x: float, dinv: float, count: int):
    # expression-identical to the kernels' mapping so both pick one stencil
    length = count / dinv
    u = ((x % length) * dinv) % count
    if u >= count:
        u -= count
    i = int(u)
    return i, u - i


def _gather_block(table, i0: int, j0: int, k0: int) -> np.ndarray:
    """The (4, 4, 4, N) float64 coefficient block around the stencil origin."""
    grid = table.grid
    ix = (i0 - 1 + np.arange(4)) % grid.nx
    iy = (j0 - 1 + np.arange(4)) % grid.ny
    iz = (k0 - 1 + np.arange(4)) % grid.nz
    if isinstance(table, CoeffTableSoA):
        block = table.data[np.ix_(ix, iy, iz)][..., : table.n_splines]
    elif isinstance(table, CoeffTableAoS):
        block = np.moveaxis(table.data[np.ix_(np.arange(table.n_splines), ix, iy, iz)], 0, -1)
    elif isinstance(table, TiledCoeffTable):
        block = np.concatenate(
            [t.data[np.ix_(ix, iy, iz)][..., : t.n_splines] for t in table.tiles], axis=-1
        )
    else:
        raise ContractError(f"unsupported table type {type(table).__name__}")
    return np.asarray(block, dtype=np.float64)


def evaluate_f64(table, kind: KernelKind, pos) -> dict:
    """Evaluate a kernel in float64; returns {stream name: (N,) float64}."""
    x, y, z = (float(c) for c in pos)
    if not all(math.isfinite(c) for c in (x, y, z)):
        raise DomainError(f"position {(x, y, z)} has non-finite components")
    grid = table.grid
    i0, tx = _map_axis_f64(x, 1.0 / grid.dx, grid.nx)
    j0, ty = _map_axis_f64(y, 1.0 / grid.dy, grid.ny)
    k0, tz = _map_axis_f64(z, 1.0 / grid.dz, grid.nz)
    ax, dax, d2ax = axis_weights_f64(tx, grid.dx)
    ay, day, d2ay = axis_weights_f64(ty, grid.dy)
    az, daz, d2az = axis_weights_f64(tz, grid.dz)
    block = _gather_block(table, i0, j0, k0)

    n = block.shape[-1]
    acc = {name: np.zeros(n) for name in KernelKind.VGH.stream_names}
    for i in range(4):
        for j in range(4):
            for k in range(4):
                p = block[i, j, k]
                acc["v"] += ax[i] * ay[j] * az[k] * p
                acc["gx"] += dax[i] * ay[j] * az[k] * p
                acc["gy"] += ax[i] * day[j] * az[k] * p
                acc["gz"] += ax[i] * ay[j] * daz[k] * p
                acc["hxx"] += d2ax[i] * ay[j] * az[k] * p
                acc["hxy"] += dax[i] * day[j] * az[k] * p
                acc["hxz"] += dax[i] * ay[j] * daz[k] * p
                acc["hyy"] += ax[i] * d2ay[j] * az[k] * p
                acc["hyz"] += ax[i] * day[j] * daz[k] * p
                acc["hzz"] += ax[i] * ay[j] * d2az[k] * p

    if kind is KernelKind.V:
        return {"v": acc["v"]}
    if kind is KernelKind.VGL:
        return {
            "v": acc["v"],
            "gx": acc["gx"],
            "gy": acc["gy"],
            "gz": acc["gz"],
            "l": acc["hxx"] + acc["hyy"] + acc["hzz"],
        }
    return acc


def value_f64(table, pos) -> np.ndarray:
    return evaluate_f64(table, KernelKind.V, pos)["v"]


def fd_gradient(table, pos, h: float = 1e-3) -> dict:
    """Central finite differences of the float64 value."""
    pos = np.asarray(pos, dtype=np.float64)
    out = {}
    for axis, name in enumerate(("gx", "gy", "gz")):
        step = np.zeros(3)
        step[axis] = h
        out[name] = (value_f64(table, pos + step) - value_f64(table, pos - step)) / (2.0 * h)
    return out


def fd_hessian(table, pos, h: float = 1e-3) -> dict:
    """Second central differences of the float64 value, six unique entries."""
    pos = np.asarray(pos, dtype=np.float64)
    center = value_f64(table, pos)
    out = {}
    for axis, name in enumerate(("hxx", "hyy", "hzz")):
        step = np.zeros(3)
        step[axis] = h
        out[name] = (
            value_f64(table, pos + step) - 2.0 * center + value_f64(table, pos - step)
        ) / h ** 2
    for (a, b), name in (((0, 1), "hxy"), ((0, 2), "hxz"), ((1, 2), "hyz")):
        sa = np.zeros(3)
        sb = np.zeros(3)
        sa[a] = h
        sb[b] = h
        out[name] = (
            value_f64(table, pos + sa + sb)
            - value_f64(table, pos + sa - sb)
            - value_f64(table, pos - sa + sb)
            + value_f64(table, pos - sa - sb)
        ) / (4.0 * h ** 2)
    return out


def stream_rel_error(got: dict, want: dict) -> float:
    """Worst per-stream sup-norm relative error between two stream dicts.

    Streams whose reference is identically zero are compared absolutely
    against a unit scale.
    """
    worst = 0.0
    for name, ref in want.items():
        ref = np.asarray(ref, dtype=np.float64)
        val = np.asarray(got[name], dtype=np.float64)
        scale = np.max(np.abs(ref))
        if scale == 0.0:
            scale = 1.0
        err = np.max(np.abs(val - ref)) / scale
        worst = max(worst, float(err))
    return worst
