import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bspb.coeffs import FillSpec, build_table, convert_aos_to_soa, tile_table
from bspb.errors import ContractError, DomainError
from bspb.grid import GridSpec
from bspb.kernels import (
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
from bspb.oracle import axis_weights_f64, evaluate_f64, stream_rel_error

G12 = GridSpec(12, 12, 12)


def _streams(table, kind, pos):
    out = allocate_outputs(table)
    eval_batch(table, kind, pos, out)
    return collect_streams(out, kind)


def test_constant_field_identities():
    table = build_table(G12, 16, FillSpec.constant(2.5))
    s = _streams(table, KernelKind.VGH, (3.3, 7.1, 0.4))
    lap = _streams(table, KernelKind.VGL, (3.3, 7.1, 0.4))["l"]
    assert np.abs(s["v"] - 2.5).max() <= 1e-5 * 2.5
    for name in ("gx", "gy", "gz", "hxx", "hxy", "hxz", "hyy", "hyz", "hzz"):
        assert np.abs(s[name]).max() <= 1e-5 * 2.5
    assert np.abs(lap).max() <= 1e-5 * 2.5


def test_linear_field_against_brute_force_stencil():
    # independent check of the linear identity: explicit float64 stencil sum
    table = build_table(GridSpec(48, 48, 48), 4, FillSpec.linear_index("x"))
    x = 10.3
    i0, t = 10, x - 10.0
    a64, _, _ = axis_weights_f64(t)
    brute = sum(a64[i] * (i0 - 1 + i) for i in range(4))
    assert brute == pytest.approx(x, abs=1e-12)

    s = _streams(table, KernelKind.VGL, (x, 5.5, 20.2))
    assert np.abs(s["v"] - x).max() <= 1e-4
    assert np.abs(s["gx"] - 1.0).max() <= 1e-4
    assert np.abs(s["gy"]).max() <= 1e-4
    assert np.abs(s["gz"]).max() <= 1e-4
    assert np.abs(s["l"]).max() <= 1e-4
    h = _streams(table, KernelKind.VGH, (x, 5.5, 20.2))
    for name in ("hxx", "hxy", "hxz", "hyy", "hyz", "hzz"):
        assert np.abs(h[name]).max() <= 1e-4


@pytest.mark.parametrize("kind", list(KernelKind))
def test_layouts_agree_bitwise(kind, random_aos, random_soa):
    rng = np.random.default_rng(0)
    positions = rng.random((50, 3)) * 12.0
    tilings = [tile_table(random_soa, nb) for nb in (1, 4, 8, 24)]
    for pos in positions:
        ref = _streams(random_soa, kind, pos)
        got_aos = _streams(random_aos, kind, pos)
        for name in ref:
            np.testing.assert_array_equal(got_aos[name], ref[name])
        for tiled in tilings:
            got = _streams(tiled, kind, pos)
            for name in ref:
                np.testing.assert_array_equal(got[name], ref[name])


def test_degenerate_tiling_bitwise(random_soa):
    tiled = tile_table(random_soa, random_soa.n_splines)
    pos = (0.7, 11.2, 5.5)
    ref = _streams(random_soa, KernelKind.VGH, pos)
    got = _streams(tiled, KernelKind.VGH, pos)
    for name in ref:
        np.testing.assert_array_equal(got[name], ref[name])


def test_value_stream_identical_across_kernels(random_soa):
    pos = (1.9, 3.3, 7.7)
    v = _streams(random_soa, KernelKind.V, pos)["v"]
    vgl = _streams(random_soa, KernelKind.VGL, pos)["v"]
    vgh = _streams(random_soa, KernelKind.VGH, pos)["v"]
    np.testing.assert_array_equal(v, vgl)
    np.testing.assert_array_equal(v, vgh)


def test_aos_hessian_symmetric_bitwise(random_aos):
    out = allocate_outputs(random_aos)
    eval_vgh(random_aos, (4.2, 8.8, 1.1), out)
    h = out.h.reshape(-1, 3, 3)
    np.testing.assert_array_equal(h, np.swapaxes(h, 1, 2))


def test_matches_oracle_on_random_table(random_soa):
    rng = np.random.default_rng(1)
    for pos in rng.random((10, 3)) * 12.0:
        got = _streams(random_soa, KernelKind.VGH, pos)
        ref = evaluate_f64(random_soa, KernelKind.VGH, pos)
        assert stream_rel_error(got, ref) <= 1e-5


def test_laplacian_equals_hessian_trace(random_soa):
    rng = np.random.default_rng(2)
    for pos in rng.random((25, 3)) * 12.0:
        vgl = _streams(random_soa, KernelKind.VGL, pos)
        vgh = _streams(random_soa, KernelKind.VGH, pos)
        trace = vgh["hxx"].astype(np.float64) + vgh["hyy"] + vgh["hzz"]
        err = np.abs(vgl["l"] - trace).max() / np.abs(trace).max()
        assert err <= 1e-4


def test_translation_by_one_spacing_on_x_constant_field():
    # constant along x only: shifting by dx must not change any output
    rng = np.random.default_rng(3)
    block = rng.random((12, 12, 6), dtype=np.float32)  # (ny, nz, n)
    data = np.broadcast_to(block, (12, 12, 12, 6)).copy()
    padded = np.zeros((12, 12, 12, 16), dtype=np.float32)
    padded[..., :6] = data
    from bspb.coeffs import CoeffTableSoA, aligned_zeros

    buf = aligned_zeros((12, 12, 12, 16))
    np.copyto(buf, padded)
    table = CoeffTableSoA(G12, 6, buf)
    for pos in rng.random((10, 3)) * 12.0:
        base = _streams(table, KernelKind.VGH, pos)
        shifted = _streams(table, KernelKind.VGH, pos + np.array([1.0, 0.0, 0.0]))
        for name in base:
            assert np.abs(shifted[name] - base[name]).max() <= 1e-5 * max(
                1.0, np.abs(base[name]).max()
            )


def test_padded_lanes_stay_garbage_free():
    table = build_table(G12, 5, FillSpec.random(4))  # n_padded = 16
    out = WalkerOutputsSoA(5)
    eval_vgh(table, (2.2, 3.3, 4.4), out)
    assert (out.v[5:] == 0.0).all()
    assert (out.g[:, 5:] == 0.0).all()
    assert (out.h[:, 5:] == 0.0).all()


def test_output_contract_violations(random_soa, random_aos):
    with pytest.raises(ContractError):
        eval_v(random_soa, (0, 0, 0), WalkerOutputsAoS(24))
    with pytest.raises(ContractError):
        eval_v(random_aos, (0, 0, 0), WalkerOutputsSoA(24))
    with pytest.raises(ContractError):
        eval_v(random_soa, (0, 0, 0), WalkerOutputsSoA(8))  # too short
    tiled = tile_table(random_soa, 8)
    with pytest.raises(ContractError):
        eval_tiled(tiled, KernelKind.V, (0, 0, 0), [WalkerOutputsSoA(8)] * 2)
    with pytest.raises(ContractError):
        eval_tiled(random_soa, KernelKind.V, (0, 0, 0), [WalkerOutputsSoA(8)])


def test_rejects_nonfinite_positions(random_soa):
    out = allocate_outputs(random_soa)
    with pytest.raises(DomainError):
        eval_v(random_soa, (np.nan, 0.0, 0.0), out)
    with pytest.raises(DomainError):
        eval_batch(random_soa, KernelKind.V, [[0.0, np.inf, 0.0]], out)


def test_batch_keeps_final_sample(random_soa):
    positions = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.0]])
    out = allocate_outputs(random_soa)
    eval_batch(random_soa, KernelKind.VGH, positions, out)
    batched = collect_streams(out, KernelKind.VGH)
    single = _streams(random_soa, KernelKind.VGH, positions[-1])
    for name in single:
        np.testing.assert_array_equal(batched[name], single[name])


@given(seed=st.integers(min_value=0, max_value=2**16))
@settings(max_examples=20, deadline=None)
def test_property_layout_equivalence(seed):
    grid = GridSpec(5, 4, 6)
    aos = build_table(grid, 7, FillSpec.random(seed), layout="aos")
    soa = convert_aos_to_soa(aos)
    pos = np.random.default_rng(seed).random(3) * np.asarray(grid.lengths)
    ref = _streams(soa, KernelKind.VGH, pos)
    got = _streams(aos, KernelKind.VGH, pos)
    for name in ref:
        np.testing.assert_array_equal(got[name], ref[name])
    assert stream_rel_error(ref, evaluate_f64(soa, KernelKind.VGH, pos)) <= 1e-5


def test_wrapper_entry_points(random_soa):
    out = allocate_outputs(random_soa)
    eval_v(random_soa, (1.0, 2.0, 3.0), out)
    v = out.v.copy()
    eval_vgl(random_soa, (1.0, 2.0, 3.0), out)
    np.testing.assert_array_equal(out.v, v)
    eval_vgh(random_soa, (1.0, 2.0, 3.0), out)
    np.testing.assert_array_equal(out.v, v)
