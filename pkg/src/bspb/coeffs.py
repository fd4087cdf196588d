"""Read-only 4D coefficient tables: construction, layout transforms, tiling.

Logically a table holds one single-precision coefficient per
(spline n, grid point i j k).  Storage comes in three flavours:

  * AoS    - spline-major, shape (N, nx, ny, nz)
  * SoA    - spline-minor, shape (nx, ny, nz, n_padded); every [i][j][k]
             row starts on a 64-byte boundary, padded lanes hold zero
  * tiled  - M independent SoA tables of tile_size splines each

Fills are defined on the logical element (n, i, j, k), so the same
FillSpec produces element-identical tables in every layout.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError
from .grid import GridSpec

ALIGN_BYTES = 64
LANE = ALIGN_BYTES // 4  # float32 elements per cache line

_MAGIC = b"BSPC"
_DUMP_VERSION = 1
_HEADER = struct.Struct("<4s6I")


def padded_count(n: int) -> int:
    """n rounded up to a whole number of 64-byte lines of float32."""
    return ((n + LANE - 1) // LANE) * LANE


def aligned_zeros(shape, dtype=np.float32, align: int = ALIGN_BYTES) -> np.ndarray:
    """Zeroed array whose base address is align-byte aligned."""
    dtype = np.dtype(dtype)
    size = int(np.prod(shape)) if not np.isscalar(shape) else int(shape)
    slack = align // dtype.itemsize
    buf = np.zeros(size + slack, dtype=dtype)
    offset = (-buf.ctypes.data) % align // dtype.itemsize
    return buf[offset : offset + size].reshape(shape)


@dataclass(frozen=True)
class FillSpec:
    """How to populate a table: constant(c), linear_index(axis) or random(seed).

    Random fills draw uniformly from [-1, 1) using a Philox stream keyed by
    (seed, spline index), so they are reproducible bit for bit and identical
    across layouts.
    """

    kind: str
    value: float = 0.0
    axis: str = "x"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("constant", "linear_index", "random"):
            raise ConfigError(f"unknown fill kind {self.kind!r}")
        if self.kind == "linear_index" and self.axis not in ("x", "y", "z"):
            raise ConfigError(f"linear_index axis must be x, y or z, got {self.axis!r}")

    @staticmethod
    def constant(value: float) -> "FillSpec":
        return FillSpec("constant", value=float(value))

    @staticmethod
    def linear_index(axis: str = "x") -> "FillSpec":
        return FillSpec("linear_index", axis=axis)

    @staticmethod
    def random(seed: int) -> "FillSpec":
        return FillSpec("random", seed=int(seed))

    def spline_values(self, grid: GridSpec, n: int) -> np.ndarray:
        """The (nx, ny, nz) float32 block of coefficients for spline n."""
        shape = grid.counts
        if self.kind == "constant":
            return np.full(shape, self.value, dtype=np.float32)
        if self.kind == "linear_index":
            axis = "xyz".index(self.axis)
            idx = np.arange(shape[axis], dtype=np.float32)
            return np.broadcast_to(
                idx.reshape([-1 if a == axis else 1 for a in range(3)]), shape
            ).copy()
        rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(entropy=self.seed, spawn_key=(n,)))
        )
        return rng.random(shape, dtype=np.float32) * np.float32(2.0) - np.float32(1.0)


class CoeffTableAoS:
    """Spline-major table; data shape (N, nx, ny, nz), no padding."""

    layout = "aos"

    def __init__(self, grid: GridSpec, data: np.ndarray):
        if data.ndim != 4 or data.shape[1:] != grid.counts:
            raise ContractError(f"AoS data shape {data.shape} does not match grid {grid.counts}")
        if data.dtype != np.float32:
            raise ContractError("coefficients must be float32")
        data.flags.writeable = False
        self.grid = grid
        self.n_splines = data.shape[0]
        self.data = data

    @property
    def nbytes(self) -> int:
        return self.data.nbytes


class CoeffTableSoA:
    """Spline-minor table; data shape (nx, ny, nz, n_padded), rows 64B-aligned."""

    layout = "soa"

    def __init__(self, grid: GridSpec, n_splines: int, data: np.ndarray):
        npad = padded_count(n_splines)
        if data.shape != grid.counts + (npad,):
            raise ContractError(
                f"SoA data shape {data.shape} does not match grid {grid.counts} + padding {npad}"
            )
        if data.dtype != np.float32:
            raise ContractError("coefficients must be float32")
        data.flags.writeable = False
        self.grid = grid
        self.n_splines = n_splines
        self.n_padded = npad
        self.data = data

    @property
    def nbytes(self) -> int:
        return self.data.nbytes


class TiledCoeffTable:
    """M independent SoA tables covering [m*tile_size, (m+1)*tile_size) each."""

    layout = "aosoa"

    def __init__(self, grid: GridSpec, tile_size: int, tiles: tuple):
        self.grid = grid
        self.tile_size = tile_size
        self.tiles = tuple(tiles)
        self.n_splines = tile_size * len(self.tiles)

    @property
    def n_tiles(self) -> int:
        return len(self.tiles)

    @property
    def nbytes(self) -> int:
        return sum(t.nbytes for t in self.tiles)


def _alloc_soa(grid: GridSpec, n_splines: int) -> np.ndarray:
    return aligned_zeros(grid.counts + (padded_count(n_splines),))


def build_table(grid: GridSpec, n_splines: int, fill: FillSpec, layout: str = "soa"):
    """Build and fill a coefficient table; the result is immutable."""
    if n_splines < 1:
        raise ConfigError(f"n_splines={n_splines} must be >= 1")
    if layout == "aos":
        data = np.empty((n_splines,) + grid.counts, dtype=np.float32)
        if fill.kind == "random":
            for n in range(n_splines):
                data[n] = fill.spline_values(grid, n)
        else:
            data[:] = fill.spline_values(grid, 0)  # constant/linear ignore n
        return CoeffTableAoS(grid, data)
    if layout == "soa":
        data = _alloc_soa(grid, n_splines)
        if fill.kind == "random":
            for n in range(n_splines):
                data[..., n] = fill.spline_values(grid, n)
        else:
            data[..., :n_splines] = fill.spline_values(grid, 0)[..., None]
        return CoeffTableSoA(grid, n_splines, data)
    raise ConfigError(f"unknown layout {layout!r} (build aosoa via tile_table)")


def convert_aos_to_soa(table: CoeffTableAoS) -> CoeffTableSoA:
    """Element-for-element transpose; padding lanes are zero."""
    if not isinstance(table, CoeffTableAoS):
        raise ContractError("convert_aos_to_soa expects an AoS table")
    data = _alloc_soa(table.grid, table.n_splines)
    np.copyto(data[..., : table.n_splines], np.moveaxis(table.data, 0, -1))
    return CoeffTableSoA(table.grid, table.n_splines, data)


def tile_table(table: CoeffTableSoA, tile_size: int) -> TiledCoeffTable:
    """Split an SoA table into N/tile_size physically separate tiles."""
    if not isinstance(table, CoeffTableSoA):
        raise ContractError("tile_table expects an SoA table")
    n = table.n_splines
    if tile_size < 1 or n % tile_size != 0:
        raise ConfigError(f"tile_size={tile_size} does not divide n_splines={n}")
    tiles = []
    for m in range(n // tile_size):
        data = _alloc_soa(table.grid, tile_size)
        lo = m * tile_size
        np.copyto(data[..., :tile_size], table.data[..., lo : lo + tile_size])
        tiles.append(CoeffTableSoA(table.grid, tile_size, data))
    return TiledCoeffTable(table.grid, tile_size, tiles)


def memory_footprint(table) -> int:
    """Exact allocated coefficient bytes, padding included; sums over tiles."""
    return table.nbytes


def dump_table(table: CoeffTableSoA, path) -> None:
    """Write an SoA table: header {BSPC, version, nx, ny, nz, N, n_padded}
    as little-endian u32 fields, then raw float32 data in SoA order."""
    if not isinstance(table, CoeffTableSoA):
        raise ContractError("dump_table expects an SoA table")
    g = table.grid
    header = _HEADER.pack(_MAGIC, _DUMP_VERSION, g.nx, g.ny, g.nz, table.n_splines, table.n_padded)
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(table.data, dtype="<f4").tobytes())


def load_table(path, spacings=(1.0, 1.0, 1.0)) -> CoeffTableSoA:
    """Read a table written by dump_table.

    The file format does not carry grid spacings; they default to 1 and can
    be supplied by the caller.
    """
    with open(path, "rb") as f:
        raw = f.read(_HEADER.size)
        if len(raw) != _HEADER.size:
            raise ContractError(f"{path}: truncated header")
        magic, version, nx, ny, nz, n, npad = _HEADER.unpack(raw)
        if magic != _MAGIC:
            raise ContractError(f"{path}: bad magic {magic!r}")
        if version != _DUMP_VERSION:
            raise ContractError(f"{path}: unsupported version {version}")
        if npad != padded_count(n):
            raise ContractError(f"{path}: n_padded={npad} inconsistent with N={n}")
        grid = GridSpec(nx, ny, nz, *spacings)
        count = nx * ny * nz * npad
        flat = np.frombuffer(f.read(count * 4), dtype="<f4", count=count)
    data = aligned_zeros((nx, ny, nz, npad))
    np.copyto(data, flat.reshape(nx, ny, nz, npad))
    return CoeffTableSoA(grid, n, data)
