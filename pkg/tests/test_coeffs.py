import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bspb.coeffs import (
    ALIGN_BYTES,
    CoeffTableSoA,
    FillSpec,
    aligned_zeros,
    build_table,
    convert_aos_to_soa,
    dump_table,
    load_table,
    memory_footprint,
    padded_count,
    tile_table,
)
from bspb.errors import ConfigError, ContractError
from bspb.grid import GridSpec

G8 = GridSpec(8, 8, 8)


def test_padded_count():
    assert padded_count(16) == 16
    assert padded_count(5) == 16
    assert padded_count(17) == 32
    assert padded_count(128) == 128


def test_aligned_zeros_alignment():
    for shape in (7, (5, 33), (4, 4, 4, 48)):
        arr = aligned_zeros(shape)
        assert arr.ctypes.data % ALIGN_BYTES == 0
        assert not arr.any()


def test_soa_rows_are_cache_line_aligned():
    table = build_table(G8, 48, FillSpec.random(1))
    base = table.data.ctypes.data
    assert base % ALIGN_BYTES == 0
    row_stride = table.data.strides[2]
    assert row_stride % ALIGN_BYTES == 0
    # spot-check actual row addresses
    for ijk in ((0, 0, 0), (1, 2, 3), (7, 7, 7)):
        addr = base + sum(s * i for s, i in zip(table.data.strides[:3], ijk))
        assert addr % ALIGN_BYTES == 0


def test_fillspec_validation():
    with pytest.raises(ConfigError):
        FillSpec("nope")
    with pytest.raises(ConfigError):
        FillSpec("linear_index", axis="w")


def test_constant_fill_both_layouts():
    for layout in ("aos", "soa"):
        table = build_table(G8, 5, FillSpec.constant(2.5), layout=layout)
        if layout == "aos":
            assert (table.data == np.float32(2.5)).all()
        else:
            assert (table.data[..., :5] == np.float32(2.5)).all()
            assert (table.data[..., 5:] == 0.0).all()  # padding lanes stay zero


def test_linear_index_fill_matches_definition():
    for axis, expect_axis in (("x", 0), ("y", 1), ("z", 2)):
        table = build_table(G8, 3, FillSpec.linear_index(axis), layout="aos")
        idx = np.arange(8, dtype=np.float32)
        shaped = idx.reshape([-1 if a == expect_axis else 1 for a in range(3)])
        assert (table.data == np.broadcast_to(shaped, (3, 8, 8, 8))).all()


def test_random_fill_is_seed_deterministic():
    a = build_table(G8, 6, FillSpec.random(42))
    b = build_table(G8, 6, FillSpec.random(42))
    np.testing.assert_array_equal(a.data, b.data)
    c = build_table(G8, 6, FillSpec.random(43))
    assert not np.array_equal(a.data, c.data)


def test_random_fill_range_and_layout_agreement():
    fill = FillSpec.random(9)
    aos = build_table(G8, 6, fill, layout="aos")
    soa = build_table(G8, 6, fill, layout="soa")
    assert aos.data.min() >= -1.0 and aos.data.max() < 1.0
    np.testing.assert_array_equal(np.moveaxis(aos.data, 0, -1), soa.data[..., :6])


def test_build_table_rejects_bad_args():
    with pytest.raises(ConfigError):
        build_table(G8, 0, FillSpec.constant(1.0))
    with pytest.raises(ConfigError):
        build_table(G8, 4, FillSpec.constant(1.0), layout="aosoa")


@given(
    n=st.integers(min_value=1, max_value=8),
    nx=st.integers(min_value=4, max_value=6),
    ny=st.integers(min_value=4, max_value=6),
    nz=st.integers(min_value=4, max_value=6),
    seed=st.integers(min_value=0, max_value=2**32 - 1),
)
@settings(max_examples=30, deadline=None)
def test_transpose_round_trip(n, nx, ny, nz, seed):
    grid = GridSpec(nx, ny, nz)
    aos = build_table(grid, n, FillSpec.random(seed), layout="aos")
    soa = convert_aos_to_soa(aos)
    assert soa.n_padded == padded_count(n)
    np.testing.assert_array_equal(np.moveaxis(soa.data[..., :n], -1, 0), aos.data)
    assert (soa.data[..., n:] == 0.0).all()


def test_tiling_conserves_elements():
    soa = build_table(G8, 24, FillSpec.random(3))
    for nb in (1, 2, 3, 4, 6, 8, 12, 24):
        tiled = tile_table(soa, nb)
        assert tiled.n_tiles == 24 // nb
        rebuilt = np.concatenate([t.data[..., :nb] for t in tiled.tiles], axis=-1)
        np.testing.assert_array_equal(rebuilt, soa.data[..., :24])
        for m, tile in enumerate(tiled.tiles):
            np.testing.assert_array_equal(
                tile.data[..., :nb], soa.data[..., m * nb : (m + 1) * nb]
            )


def test_degenerate_tiling_is_identity():
    soa = build_table(G8, 16, FillSpec.random(5))
    tiled = tile_table(soa, 16)
    assert tiled.n_tiles == 1
    np.testing.assert_array_equal(tiled.tiles[0].data, soa.data)


def test_tile_size_must_divide():
    soa = build_table(G8, 24, FillSpec.random(0))
    with pytest.raises(ConfigError):
        tile_table(soa, 7)


def test_tile_counts_for_large_n():
    grid = GridSpec(4, 4, 4)
    soa = build_table(grid, 2048, FillSpec.constant(0.5))
    assert tile_table(soa, 512).n_tiles == 4
    assert tile_table(soa, 16).n_tiles == 128


def test_memory_footprints():
    g48 = GridSpec(48, 48, 48)
    soa = build_table(g48, 128, FillSpec.constant(1.0))
    assert memory_footprint(soa) == 4 * 48**3 * 128 == 56_623_104
    aos = build_table(g48, 128, FillSpec.constant(1.0), layout="aos")
    assert memory_footprint(aos) == memory_footprint(soa)  # N is a multiple of 16


def test_tiled_footprint_conserved():
    soa = build_table(G8, 64, FillSpec.constant(1.0))
    tiled = tile_table(soa, 16)
    assert memory_footprint(tiled) == memory_footprint(soa)


def test_padding_inflates_footprint_only_for_ragged_n():
    table = build_table(G8, 5, FillSpec.constant(1.0))
    assert memory_footprint(table) == 4 * 8**3 * 16


def test_tables_are_immutable():
    for layout in ("aos", "soa"):
        table = build_table(G8, 4, FillSpec.constant(1.0), layout=layout)
        with pytest.raises(ValueError):
            table.data[tuple(0 for _ in table.data.shape)] = 9.0
    tiled = tile_table(build_table(G8, 4, FillSpec.constant(1.0)), 2)
    with pytest.raises(ValueError):
        tiled.tiles[0].data[0, 0, 0, 0] = 9.0


def test_dump_load_round_trip(tmp_path):
    table = build_table(GridSpec(5, 6, 7), 10, FillSpec.random(8))
    path = tmp_path / "table.bspc"
    dump_table(table, path)
    loaded = load_table(path, spacings=(1.0, 1.0, 1.0))
    assert isinstance(loaded, CoeffTableSoA)
    assert loaded.grid.counts == (5, 6, 7)
    assert loaded.n_splines == 10 and loaded.n_padded == 16
    np.testing.assert_array_equal(loaded.data, table.data)
    assert loaded.data.ctypes.data % ALIGN_BYTES == 0


def test_dump_header_layout(tmp_path):
    table = build_table(GridSpec(4, 4, 4), 3, FillSpec.constant(0.0))
    path = tmp_path / "t.bspc"
    dump_table(table, path)
    raw = path.read_bytes()
    assert raw[:4] == b"BSPC"
    header = np.frombuffer(raw[4:28], dtype="<u4")
    assert header.tolist() == [1, 4, 4, 4, 3, 16]
    assert len(raw) == 28 + 4 * 4 * 4 * 4 * 16


def test_load_rejects_corrupt_files(tmp_path):
    path = tmp_path / "bad.bspc"
    path.write_bytes(b"NOPE" + b"\x00" * 24)
    with pytest.raises(ContractError):
        load_table(path)
    path.write_bytes(b"BS")
    with pytest.raises(ContractError):
        load_table(path)


def test_dump_rejects_aos():
    aos = build_table(G8, 4, FillSpec.constant(1.0), layout="aos")
    with pytest.raises(ContractError):
        dump_table(aos, "/tmp/never-written.bspc")
