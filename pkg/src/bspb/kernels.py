"""Single-precision tricubic evaluation kernels: V, VGL and VGH.

One call evaluates N splines at one position by accumulating over the
4x4x4 stencil.  Loop order is fixed everywhere: i outer, j middle, k
inner, spline index n innermost.  Prefactor products are written with
identical expressions in every kernel and fastmath is off, so the
per-lane arithmetic sequence is the same for AoS, SoA and tiled storage
and their outputs agree bit for bit.  There is no FMA contraction.

Kernels read shared immutable tables and write caller-owned buffers;
concurrent calls with disjoint outputs are safe (nogil).
"""

from __future__ import annotations

import enum

import numpy as np
from numba import njit

from .coeffs import CoeffTableAoS, CoeffTableSoA, TiledCoeffTable, aligned_zeros, padded_count
from .errors import ContractError, DomainError
from .grid import _fill_axis_weights, _map_axis


class KernelKind(enum.Enum):
    """V = value; VGL = value, gradient, Laplacian; VGH = value, gradient, Hessian."""

    V = "v"
    VGL = "vgl"
    VGH = "vgh"

    @property
    def output_streams_soa(self) -> int:
        return {KernelKind.V: 1, KernelKind.VGL: 5, KernelKind.VGH: 10}[self]

    @property
    def output_streams_aos(self) -> int:
        # the AoS Hessian stores all nine entries of the symmetric tensor
        return {KernelKind.V: 1, KernelKind.VGL: 5, KernelKind.VGH: 13}[self]

    def output_streams(self, layout: str) -> int:
        return self.output_streams_aos if layout == "aos" else self.output_streams_soa

    @property
    def stream_names(self) -> tuple:
        if self is KernelKind.V:
            return ("v",)
        if self is KernelKind.VGL:
            return ("v", "gx", "gy", "gz", "l")
        return ("v", "gx", "gy", "gz", "hxx", "hxy", "hxz", "hyy", "hyz", "hzz")


class WalkerOutputsSoA:
    """Planar output streams: v, g (3 rows), l, h (6 rows: xx xy xz yy yz zz).

    Stream length equals the padded spline count of the paired table; lanes
    at or beyond n_splines are scratch and never read back.
    """

    layout = "soa"

    def __init__(self, n_splines: int):
        npad = padded_count(n_splines)
        self.n_splines = n_splines
        self.n_padded = npad
        self.v = aligned_zeros(npad)
        self.g = aligned_zeros((3, npad))
        self.l = aligned_zeros(npad)
        self.h = aligned_zeros((6, npad))

    @property
    def nbytes(self) -> int:
        return self.v.nbytes + self.g.nbytes + self.l.nbytes + self.h.nbytes

    def streams(self, kind: KernelKind) -> dict:
        """Live views of the streams a kernel writes, trimmed to n_splines."""
        n = self.n_splines
        out = {"v": self.v[:n]}
        if kind is KernelKind.V:
            return out
        out.update(gx=self.g[0, :n], gy=self.g[1, :n], gz=self.g[2, :n])
        if kind is KernelKind.VGL:
            out["l"] = self.l[:n]
            return out
        for row, name in enumerate(("hxx", "hxy", "hxz", "hyy", "hyz", "hzz")):
            out[name] = self.h[row, :n]
        return out


class WalkerOutputsAoS:
    """Interleaved output buffers: v[N], g[3N] as xyz|xyz|..., l[N],
    h[9N] as row-major 3x3 blocks per spline."""

    layout = "aos"

    def __init__(self, n_splines: int):
        self.n_splines = n_splines
        self.v = np.zeros(n_splines, dtype=np.float32)
        self.g = np.zeros(3 * n_splines, dtype=np.float32)
        self.l = np.zeros(n_splines, dtype=np.float32)
        self.h = np.zeros(9 * n_splines, dtype=np.float32)

    @property
    def nbytes(self) -> int:
        return self.v.nbytes + self.g.nbytes + self.l.nbytes + self.h.nbytes

    def streams(self, kind: KernelKind) -> dict:
        """De-interleaved copies in the same naming as the SoA streams."""
        out = {"v": self.v.copy()}
        if kind is KernelKind.V:
            return out
        g = self.g.reshape(-1, 3)
        out.update(gx=g[:, 0].copy(), gy=g[:, 1].copy(), gz=g[:, 2].copy())
        if kind is KernelKind.VGL:
            out["l"] = self.l.copy()
            return out
        h = self.h.reshape(-1, 3, 3)
        for name, (r, c) in (
            ("hxx", (0, 0)), ("hxy", (0, 1)), ("hxz", (0, 2)),
            ("hyy", (1, 1)), ("hyz", (1, 2)), ("hzz", (2, 2)),
        ):
            out[name] = h[:, r, c].copy()
        return out


# ---------------------------------------------------------------------------
# njit cores.  Weight scratch wx/wy/wz is (3, 4) float32 per axis, filled by
# _prep; callers allocate it once per batch.


@njit(cache=True, nogil=True)
def _prep(x, y, z, dxi, dyi, dzi, nx, ny, nz, wx, wy, wz):
    i0, tx = _map_axis(x, dxi, float(nx))
    j0, ty = _map_axis(y, dyi, float(ny))
    k0, tz = _map_axis(z, dzi, float(nz))
    _fill_axis_weights(tx, dxi, wx)
    _fill_axis_weights(ty, dyi, wy)
    _fill_axis_weights(tz, dzi, wz)
    return i0, j0, k0


@njit(cache=True, nogil=True)
def _v_soa(data, dxi, dyi, dzi, x, y, z, wx, wy, wz, v):
    nx, ny, nz = data.shape[0], data.shape[1], data.shape[2]
    i0, j0, k0 = _prep(x, y, z, dxi, dyi, dzi, nx, ny, nz, wx, wy, wz)
    ax = wx[0]
    ay = wy[0]
    az = wz[0]
    for n in range(v.shape[0]):
        v[n] = 0.0
    for i in range(4):
        ii = (i0 - 1 + i) % nx
        for j in range(4):
            jj = (j0 - 1 + j) % ny
            for k in range(4):
                kk = (k0 - 1 + k) % nz
                p = data[ii, jj, kk]
                pv = ax[i] * ay[j] * az[k]
                for n in range(v.shape[0]):
                    v[n] += pv * p[n]


@njit(cache=True, nogil=True)
def _vgl_soa(data, dxi, dyi, dzi, x, y, z, wx, wy, wz, v, g, l):
    nx, ny, nz = data.shape[0], data.shape[1], data.shape[2]
    i0, j0, k0 = _prep(x, y, z, dxi, dyi, dzi, nx, ny, nz, wx, wy, wz)
    ax, dax, d2ax = wx[0], wx[1], wx[2]
    ay, day, d2ay = wy[0], wy[1], wy[2]
    az, daz, d2az = wz[0], wz[1], wz[2]
    gx, gy, gz = g[0], g[1], g[2]
    for n in range(v.shape[0]):
        v[n] = 0.0
        gx[n] = 0.0
        gy[n] = 0.0
        gz[n] = 0.0
        l[n] = 0.0
    for i in range(4):
        ii = (i0 - 1 + i) % nx
        for j in range(4):
            jj = (j0 - 1 + j) % ny
            for k in range(4):
                kk = (k0 - 1 + k) % nz
                p = data[ii, jj, kk]
                pv = ax[i] * ay[j] * az[k]
                pgx = dax[i] * ay[j] * az[k]
                pgy = ax[i] * day[j] * az[k]
                pgz = ax[i] * ay[j] * daz[k]
                pl = d2ax[i] * ay[j] * az[k] + ax[i] * d2ay[j] * az[k] + ax[i] * ay[j] * d2az[k]
                for n in range(v.shape[0]):
                    c = p[n]
                    v[n] += pv * c
                    gx[n] += pgx * c
                    gy[n] += pgy * c
                    gz[n] += pgz * c
                    l[n] += pl * c


@njit(cache=True, nogil=True)
def _vgh_soa(data, dxi, dyi, dzi, x, y, z, wx, wy, wz, v, g, h):
    nx, ny, nz = data.shape[0], data.shape[1], data.shape[2]
    i0, j0, k0 = _prep(x, y, z, dxi, dyi, dzi, nx, ny, nz, wx, wy, wz)
    ax, dax, d2ax = wx[0], wx[1], wx[2]
    ay, day, d2ay = wy[0], wy[1], wy[2]
    az, daz, d2az = wz[0], wz[1], wz[2]
    gx, gy, gz = g[0], g[1], g[2]
    hxx, hxy, hxz, hyy, hyz, hzz = h[0], h[1], h[2], h[3], h[4], h[5]
    for n in range(v.shape[0]):
        v[n] = 0.0
        gx[n] = 0.0
        gy[n] = 0.0
        gz[n] = 0.0
        hxx[n] = 0.0
        hxy[n] = 0.0
        hxz[n] = 0.0
        hyy[n] = 0.0
        hyz[n] = 0.0
        hzz[n] = 0.0
    for i in range(4):
        ii = (i0 - 1 + i) % nx
        for j in range(4):
            jj = (j0 - 1 + j) % ny
            for k in range(4):
                kk = (k0 - 1 + k) % nz
                p = data[ii, jj, kk]
                pv = ax[i] * ay[j] * az[k]
                pgx = dax[i] * ay[j] * az[k]
                pgy = ax[i] * day[j] * az[k]
                pgz = ax[i] * ay[j] * daz[k]
                phxx = d2ax[i] * ay[j] * az[k]
                phxy = dax[i] * day[j] * az[k]
                phxz = dax[i] * ay[j] * daz[k]
                phyy = ax[i] * d2ay[j] * az[k]
                phyz = ax[i] * day[j] * daz[k]
                phzz = ax[i] * ay[j] * d2az[k]
                for n in range(v.shape[0]):
                    c = p[n]
                    v[n] += pv * c
                    gx[n] += pgx * c
                    gy[n] += pgy * c
                    gz[n] += pgz * c
                    hxx[n] += phxx * c
                    hxy[n] += phxy * c
                    hxz[n] += phxz * c
                    hyy[n] += phyy * c
                    hyz[n] += phyz * c
                    hzz[n] += phzz * c


@njit(cache=True, nogil=True)
def _v_aos(data, dxi, dyi, dzi, x, y, z, wx, wy, wz, v):
    nv = data.shape[0]
    nx, ny, nz = data.shape[1], data.shape[2], data.shape[3]
    i0, j0, k0 = _prep(x, y, z, dxi, dyi, dzi, nx, ny, nz, wx, wy, wz)
    ax = wx[0]
    ay = wy[0]
    az = wz[0]
    for n in range(nv):
        v[n] = 0.0
    for i in range(4):
        ii = (i0 - 1 + i) % nx
        for j in range(4):
            jj = (j0 - 1 + j) % ny
            for k in range(4):
                kk = (k0 - 1 + k) % nz
                pv = ax[i] * ay[j] * az[k]
                for n in range(nv):
                    v[n] += pv * data[n, ii, jj, kk]


@njit(cache=True, nogil=True)
def _vgl_aos(data, dxi, dyi, dzi, x, y, z, wx, wy, wz, v, g, l):
    nv = data.shape[0]
    nx, ny, nz = data.shape[1], data.shape[2], data.shape[3]
    i0, j0, k0 = _prep(x, y, z, dxi, dyi, dzi, nx, ny, nz, wx, wy, wz)
    ax, dax, d2ax = wx[0], wx[1], wx[2]
    ay, day, d2ay = wy[0], wy[1], wy[2]
    az, daz, d2az = wz[0], wz[1], wz[2]
    for n in range(nv):
        v[n] = 0.0
        g[3 * n + 0] = 0.0
        g[3 * n + 1] = 0.0
        g[3 * n + 2] = 0.0
        l[n] = 0.0
    for i in range(4):
        ii = (i0 - 1 + i) % nx
        for j in range(4):
            jj = (j0 - 1 + j) % ny
            for k in range(4):
                kk = (k0 - 1 + k) % nz
                pv = ax[i] * ay[j] * az[k]
                pgx = dax[i] * ay[j] * az[k]
                pgy = ax[i] * day[j] * az[k]
                pgz = ax[i] * ay[j] * daz[k]
                pl = d2ax[i] * ay[j] * az[k] + ax[i] * d2ay[j] * az[k] + ax[i] * ay[j] * d2az[k]
                for n in range(nv):
                    c = data[n, ii, jj, kk]
                    v[n] += pv * c
                    g[3 * n + 0] += pgx * c
                    g[3 * n + 1] += pgy * c
                    g[3 * n + 2] += pgz * c
                    l[n] += pl * c


@njit(cache=True, nogil=True)
def _vgh_aos(data, dxi, dyi, dzi, x, y, z, wx, wy, wz, v, g, h):
    nv = data.shape[0]
    nx, ny, nz = data.shape[1], data.shape[2], data.shape[3]
    i0, j0, k0 = _prep(x, y, z, dxi, dyi, dzi, nx, ny, nz, wx, wy, wz)
    ax, dax, d2ax = wx[0], wx[1], wx[2]
    ay, day, d2ay = wy[0], wy[1], wy[2]
    az, daz, d2az = wz[0], wz[1], wz[2]
    for n in range(nv):
        v[n] = 0.0
        g[3 * n + 0] = 0.0
        g[3 * n + 1] = 0.0
        g[3 * n + 2] = 0.0
        for m in range(9):
            h[9 * n + m] = 0.0
    for i in range(4):
        ii = (i0 - 1 + i) % nx
        for j in range(4):
            jj = (j0 - 1 + j) % ny
            for k in range(4):
                kk = (k0 - 1 + k) % nz
                pv = ax[i] * ay[j] * az[k]
                pgx = dax[i] * ay[j] * az[k]
                pgy = ax[i] * day[j] * az[k]
                pgz = ax[i] * ay[j] * daz[k]
                phxx = d2ax[i] * ay[j] * az[k]
                phxy = dax[i] * day[j] * az[k]
                phxz = dax[i] * ay[j] * daz[k]
                phyy = ax[i] * d2ay[j] * az[k]
                phyz = ax[i] * day[j] * daz[k]
                phzz = ax[i] * ay[j] * d2az[k]
                for n in range(nv):
                    c = data[n, ii, jj, kk]
                    v[n] += pv * c
                    g[3 * n + 0] += pgx * c
                    g[3 * n + 1] += pgy * c
                    g[3 * n + 2] += pgz * c
                    h[9 * n + 0] += phxx * c
                    h[9 * n + 1] += phxy * c
                    h[9 * n + 2] += phxz * c
                    h[9 * n + 3] += phxy * c
                    h[9 * n + 4] += phyy * c
                    h[9 * n + 5] += phyz * c
                    h[9 * n + 6] += phxz * c
                    h[9 * n + 7] += phyz * c
                    h[9 * n + 8] += phzz * c


# batch drivers: one njit call per (kernel, layout) over a whole sample set,
# weight scratch allocated once.  Outputs hold the final sample on return.


@njit(cache=True, nogil=True)
def _batch_v_soa(data, dxi, dyi, dzi, pos, v):
    wx = np.empty((3, 4), np.float32)
    wy = np.empty((3, 4), np.float32)
    wz = np.empty((3, 4), np.float32)
    for s in range(pos.shape[0]):
        _v_soa(data, dxi, dyi, dzi, pos[s, 0], pos[s, 1], pos[s, 2], wx, wy, wz, v)


@njit(cache=True, nogil=True)
def _batch_vgl_soa(data, dxi, dyi, dzi, pos, v, g, l):
    wx = np.empty((3, 4), np.float32)
    wy = np.empty((3, 4), np.float32)
    wz = np.empty((3, 4), np.float32)
    for s in range(pos.shape[0]):
        _vgl_soa(data, dxi, dyi, dzi, pos[s, 0], pos[s, 1], pos[s, 2], wx, wy, wz, v, g, l)


@njit(cache=True, nogil=True)
def _batch_vgh_soa(data, dxi, dyi, dzi, pos, v, g, h):
    wx = np.empty((3, 4), np.float32)
    wy = np.empty((3, 4), np.float32)
    wz = np.empty((3, 4), np.float32)
    for s in range(pos.shape[0]):
        _vgh_soa(data, dxi, dyi, dzi, pos[s, 0], pos[s, 1], pos[s, 2], wx, wy, wz, v, g, h)


@njit(cache=True, nogil=True)
def _batch_v_aos(data, dxi, dyi, dzi, pos, v):
    wx = np.empty((3, 4), np.float32)
    wy = np.empty((3, 4), np.float32)
    wz = np.empty((3, 4), np.float32)
    for s in range(pos.shape[0]):
        _v_aos(data, dxi, dyi, dzi, pos[s, 0], pos[s, 1], pos[s, 2], wx, wy, wz, v)


@njit(cache=True, nogil=True)
def _batch_vgl_aos(data, dxi, dyi, dzi, pos, v, g, l):
    wx = np.empty((3, 4), np.float32)
    wy = np.empty((3, 4), np.float32)
    wz = np.empty((3, 4), np.float32)
    for s in range(pos.shape[0]):
        _vgl_aos(data, dxi, dyi, dzi, pos[s, 0], pos[s, 1], pos[s, 2], wx, wy, wz, v, g, l)


@njit(cache=True, nogil=True)
def _batch_vgh_aos(data, dxi, dyi, dzi, pos, v, g, h):
    wx = np.empty((3, 4), np.float32)
    wy = np.empty((3, 4), np.float32)
    wz = np.empty((3, 4), np.float32)
    for s in range(pos.shape[0]):
        _vgh_aos(data, dxi, dyi, dzi, pos[s, 0], pos[s, 1], pos[s, 2], wx, wy, wz, v, g, h)


# ---------------------------------------------------------------------------
# dispatch


def _check_pair(table, out):
    if isinstance(table, CoeffTableSoA):
        if not isinstance(out, WalkerOutputsSoA):
            raise ContractError("SoA table requires WalkerOutputsSoA")
        if out.n_padded < table.n_padded:
            raise ContractError(
                f"output streams ({out.n_padded}) shorter than table rows ({table.n_padded})"
            )
    elif isinstance(table, CoeffTableAoS):
        if not isinstance(out, WalkerOutputsAoS):
            raise ContractError("AoS table requires WalkerOutputsAoS")
        if out.n_splines < table.n_splines:
            raise ContractError(
                f"output buffers ({out.n_splines}) shorter than n_splines ({table.n_splines})"
            )
    else:
        raise ContractError(f"unsupported table type {type(table).__name__} (tiled: eval_tiled)")


def _as_positions(pos) -> np.ndarray:
    arr = np.ascontiguousarray(pos, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ContractError(f"positions must have shape (ns, 3), got {arr.shape}")
    if not np.isfinite(arr).all():
        raise DomainError("positions contain non-finite components")
    return arr


def eval_batch(table, kind: KernelKind, positions, out) -> None:
    """Evaluate a kernel at every position in order; `out` keeps the last one.

    For tiled tables `out` must be a sequence of per-tile WalkerOutputsSoA
    and the tiles are processed one after another (tile outer, sample inner).
    """
    pos = _as_positions(positions)
    if isinstance(table, TiledCoeffTable):
        if len(out) != table.n_tiles:
            raise ContractError(f"{len(out)} output sets for {table.n_tiles} tiles")
        for tile, tile_out in zip(table.tiles, out):
            eval_batch(tile, kind, pos, tile_out)
        return
    _check_pair(table, out)
    dxi, dyi, dzi = table.grid.inverse_spacings
    if isinstance(table, CoeffTableSoA):
        if kind is KernelKind.V:
            _batch_v_soa(table.data, dxi, dyi, dzi, pos, out.v)
        elif kind is KernelKind.VGL:
            _batch_vgl_soa(table.data, dxi, dyi, dzi, pos, out.v, out.g, out.l)
        else:
            _batch_vgh_soa(table.data, dxi, dyi, dzi, pos, out.v, out.g, out.h)
    else:
        if kind is KernelKind.V:
            _batch_v_aos(table.data, dxi, dyi, dzi, pos, out.v)
        elif kind is KernelKind.VGL:
            _batch_vgl_aos(table.data, dxi, dyi, dzi, pos, out.v, out.g, out.l)
        else:
            _batch_vgh_aos(table.data, dxi, dyi, dzi, pos, out.v, out.g, out.h)


def eval_v(table, pos, out) -> None:
    """value of every spline at one position."""
    eval_batch(table, KernelKind.V, pos, out)


def eval_vgl(table, pos, out) -> None:
    """value, gradient and Laplacian (5 components per spline)."""
    eval_batch(table, KernelKind.VGL, pos, out)


def eval_vgh(table, pos, out) -> None:
    """value, gradient and symmetric Hessian."""
    eval_batch(table, KernelKind.VGH, pos, out)


def eval_tiled(tiled: TiledCoeffTable, kind: KernelKind, pos, outs) -> None:
    """Run the per-tile SoA kernel on each tile; prefactors are recomputed
    per tile.  Concatenated tile outputs equal the untiled SoA outputs."""
    if not isinstance(tiled, TiledCoeffTable):
        raise ContractError("eval_tiled expects a TiledCoeffTable")
    eval_batch(tiled, kind, pos, outs)


def allocate_outputs(table):
    """Output buffers matching a table's layout (a list for tiled tables)."""
    if isinstance(table, TiledCoeffTable):
        return [WalkerOutputsSoA(t.n_splines) for t in table.tiles]
    if isinstance(table, CoeffTableSoA):
        return WalkerOutputsSoA(table.n_splines)
    if isinstance(table, CoeffTableAoS):
        return WalkerOutputsAoS(table.n_splines)
    raise ContractError(f"unsupported table type {type(table).__name__}")


def collect_streams(out, kind: KernelKind) -> dict:
    """Copy outputs into {stream name: float32 array of length N}; for tiled
    output lists the per-tile slices are concatenated in tile order."""
    if isinstance(out, (list, tuple)):
        parts = [o.streams(kind) for o in out]
        return {
            name: np.concatenate([np.asarray(p[name]) for p in parts])
            for name in parts[0]
        }
    return {name: np.array(arr, copy=True) for name, arr in out.streams(kind).items()}
