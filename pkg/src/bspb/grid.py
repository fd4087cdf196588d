"""Uniform-grid mapping and 1D cubic B-spline basis weights.

This is the math shared by every evaluation kernel: a position is reduced
into the periodic domain, split into a lower-bound grid index and a
fractional offset t in [0, 1), and each axis gets four basis weights for
the value and its first two derivatives.  The four weights correspond to
the stencil points {i0-1, i0, i0+1, i0+2}, wrapped periodically.

Value weights are the standard uniform cubic B-spline polynomials

    a0 = (1-t)^3 / 6
    a1 = (3t^3 - 6t^2 + 4) / 6
    a2 = (-3t^3 + 3t^2 + 3t + 1) / 6
    a3 = t^3 / 6

which sum to 1 for every t (partition of unity).  Derivative weights are
d/dt of these scaled by 1/delta, second derivatives by 1/delta^2.

Weights are evaluated in double precision and rounded once to single
precision; all kernel arithmetic downstream is single precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ConfigError, DomainError


@dataclass(frozen=True)
class GridSpec:
    """A 3D uniform grid with periodic wraparound.

    nx, ny, nz are per-axis point counts (>= 4 so a 4-point stencil fits),
    dx, dy, dz the spacings.  The domain length per axis is count * spacing
    and every position is interpreted modulo that length.
    """

    nx: int
    ny: int
    nz: int
    dx: float = 1.0
    dy: float = 1.0
    dz: float = 1.0
    periodic: bool = True

    def __post_init__(self):
        for name in ("nx", "ny", "nz"):
            n = getattr(self, name)
            if not isinstance(n, (int, np.integer)) or n < 4:
                raise ConfigError(f"{name}={n!r}: grid counts must be integers >= 4")
        for name in ("dx", "dy", "dz"):
            d = getattr(self, name)
            if not (d > 0.0 and math.isfinite(d)):
                raise ConfigError(f"{name}={d!r}: grid spacings must be positive and finite")
        if not self.periodic:
            raise ConfigError("only periodic grids are supported")

    @property
    def counts(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def spacings(self) -> tuple[float, float, float]:
        return (self.dx, self.dy, self.dz)

    @property
    def lengths(self) -> tuple[float, float, float]:
        return (self.nx * self.dx, self.ny * self.dy, self.nz * self.dz)

    @property
    def inverse_spacings(self) -> tuple[float, float, float]:
        return (1.0 / self.dx, 1.0 / self.dy, 1.0 / self.dz)

    @property
    def n_points(self) -> int:
        return self.nx * self.ny * self.nz


@dataclass(frozen=True)
class GridPoint:
    """Lower-bound stencil indices and fractional offsets for one position."""

    i0: int
    j0: int
    k0: int
    tx: float
    ty: float
    tz: float


@dataclass(frozen=True)
class BasisWeights:
    """Per-axis 4-point weights: value (a), d/dx (da), d2/dx2 (d2a).

    All three are float32 arrays of length 4 ordered to match the stencil
    {i0-1, i0, i0+1, i0+2}.  da carries units 1/delta and d2a 1/delta^2.
    """

    a: np.ndarray
    da: np.ndarray
    d2a: np.ndarray


@njit(cache=True, nogil=True)
def _map_axis(x, dinv, count):
    """Reduce x into [0, count) grid units; return (index, fraction).

    The position is wrapped into the domain before scaling so that huge
    finite coordinates cannot overflow; fmod keeps the remainder exact.
    """
    length = count / dinv
    u = ((x % length) * dinv) % count
    if u >= count:  # pre-reduction of tiny negatives can round up to length
        u -= count
    i = int(u)
    return i, u - i


@njit(cache=True, nogil=True)
def _fill_axis_weights(t, dinv, w):
    """Fill w (3, 4) float32 with a / da / d2a rows for offset t, spacing 1/dinv."""
    s = 1.0 - t
    w[0, 0] = s * s * s / 6.0
    w[0, 1] = (3.0 * t * t * t - 6.0 * t * t + 4.0) / 6.0
    w[0, 2] = (-3.0 * t * t * t + 3.0 * t * t + 3.0 * t + 1.0) / 6.0
    w[0, 3] = t * t * t / 6.0
    w[1, 0] = -0.5 * s * s * dinv
    w[1, 1] = (1.5 * t * t - 2.0 * t) * dinv
    w[1, 2] = (-1.5 * t * t + t + 0.5) * dinv
    w[1, 3] = 0.5 * t * t * dinv
    w[2, 0] = s * dinv * dinv
    w[2, 1] = (3.0 * t - 2.0) * dinv * dinv
    w[2, 2] = (1.0 - 3.0 * t) * dinv * dinv
    w[2, 3] = t * dinv * dinv


@njit(cache=True, nogil=True)
def _weights_batch(ts, dinv, out):
    for m in range(ts.shape[0]):
        _fill_axis_weights(ts[m], dinv, out[m])


def _check_position(pos):
    x, y, z = float(pos[0]), float(pos[1]), float(pos[2])
    if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(z)):
        raise DomainError(f"position {(x, y, z)} has non-finite components")
    return x, y, z


def map_to_grid(pos, grid: GridSpec) -> GridPoint:
    """Locate a position on the periodic grid.

    Any finite position is accepted; negatives and values beyond the domain
    length wrap around.  The fractional offset satisfies 0 <= t < 1, with
    positions landing exactly on a grid point taking t = 0 at that index.
    """
    x, y, z = _check_position(pos)
    dxi, dyi, dzi = grid.inverse_spacings
    i0, tx = _map_axis(x, dxi, float(grid.nx))
    j0, ty = _map_axis(y, dyi, float(grid.ny))
    k0, tz = _map_axis(z, dzi, float(grid.nz))
    return GridPoint(i0, j0, k0, tx, ty, tz)


def stencil_indices(point: GridPoint, grid: GridSpec) -> np.ndarray:
    """The wrapped 4-point stencil per axis, shape (3, 4) int64."""
    out = np.empty((3, 4), dtype=np.int64)
    for row, (i0, n) in enumerate(
        ((point.i0, grid.nx), (point.j0, grid.ny), (point.k0, grid.nz))
    ):
        out[row] = (i0 - 1 + np.arange(4)) % n
    return out


def basis_weights(t: float, delta: float = 1.0) -> BasisWeights:
    """Basis weights for a fractional offset t in [0, 1) at grid spacing delta."""
    if not (0.0 <= t < 1.0):
        raise DomainError(f"t={t!r} outside [0, 1)")
    if not (delta > 0.0 and math.isfinite(delta)):
        raise DomainError(f"delta={delta!r} must be positive and finite")
    w = np.empty((3, 4), dtype=np.float32)
    _fill_axis_weights(float(t), 1.0 / delta, w)
    w.flags.writeable = False
    return BasisWeights(a=w[0], da=w[1], d2a=w[2])


def basis_weights_batch(ts, delta: float = 1.0) -> np.ndarray:
    """Weights for many offsets at once; returns (len(ts), 3, 4) float32."""
    ts = np.ascontiguousarray(ts, dtype=np.float64)
    if ts.ndim != 1:
        raise DomainError("ts must be one dimensional")
    if ts.size and not ((ts >= 0.0).all() and (ts < 1.0).all()):
        raise DomainError("all offsets must lie in [0, 1)")
    if not (delta > 0.0 and math.isfinite(delta)):
        raise DomainError(f"delta={delta!r} must be positive and finite")
    out = np.empty((ts.shape[0], 3, 4), dtype=np.float32)
    _weights_batch(ts, 1.0 / delta, out)
    return out


def compute_prefactors(pos, grid: GridSpec):
    """Grid point plus one BasisWeights per axis; cost independent of the
    number of splines evaluated afterwards."""
    point = map_to_grid(pos, grid)
    wx = basis_weights(point.tx, grid.dx)
    wy = basis_weights(point.ty, grid.dy)
    wz = basis_weights(point.tz, grid.dz)
    return point, (wx, wy, wz)
