import numpy as np
import pytest

from bspb.coeffs import FillSpec, build_table, convert_aos_to_soa, tile_table
from bspb.errors import DomainError
from bspb.grid import GridSpec
from bspb.kernels import KernelKind
from bspb.oracle import (
    axis_weights_f64,
    evaluate_f64,
    fd_gradient,
    fd_hessian,
    stream_rel_error,
    value_f64,
)

G10 = GridSpec(10, 10, 10)


def test_partition_of_unity_double_precision():
    for t in np.random.default_rng(0).random(1000):
        a, da, d2a = axis_weights_f64(float(t))
        assert abs(a.sum() - 1.0) < 1e-14
        assert abs(da.sum()) < 1e-14
        assert abs(d2a.sum()) < 1e-13


def test_axis_weights_domain():
    with pytest.raises(DomainError):
        axis_weights_f64(1.0)


def test_constant_field_exact_to_roundoff():
    table = build_table(G10, 4, FillSpec.constant(3.25))
    out = evaluate_f64(table, KernelKind.VGH, (1.1, 2.2, 3.3))
    assert np.abs(out["v"] - 3.25).max() < 1e-13
    for name in ("gx", "gy", "gz", "hxx", "hxy", "hxz", "hyy", "hyz", "hzz"):
        assert np.abs(out[name]).max() < 1e-13


def test_oracle_layout_independent():
    aos = build_table(G10, 6, FillSpec.random(5), layout="aos")
    soa = convert_aos_to_soa(aos)
    tiled = tile_table(soa, 2)
    pos = (4.4, 0.1, 9.9)
    ref = evaluate_f64(soa, KernelKind.VGH, pos)
    for table in (aos, tiled):
        got = evaluate_f64(table, KernelKind.VGH, pos)
        for name in ref:
            np.testing.assert_array_equal(got[name], ref[name])


def test_oracle_gradient_consistent_with_its_own_value():
    table = build_table(G10, 4, FillSpec.random(2))
    pos = np.array([3.37, 6.51, 1.23])
    out = evaluate_f64(table, KernelKind.VGH, pos)
    fd = fd_gradient(table, pos, h=1e-5)
    for name in ("gx", "gy", "gz"):
        assert np.abs(out[name] - fd[name]).max() < 1e-8 * max(1.0, np.abs(out[name]).max())


def test_oracle_hessian_consistent_with_its_own_value():
    table = build_table(G10, 4, FillSpec.random(2))
    pos = np.array([3.37, 6.51, 1.23])
    out = evaluate_f64(table, KernelKind.VGH, pos)
    fd = fd_hessian(table, pos, h=1e-4)
    err = stream_rel_error({k: fd[k] for k in fd}, {k: out[k] for k in fd})
    assert err < 1e-6


def test_vgl_laplacian_is_trace():
    table = build_table(G10, 8, FillSpec.random(7))
    pos = (2.9, 8.8, 4.0)
    vgl = evaluate_f64(table, KernelKind.VGL, pos)
    vgh = evaluate_f64(table, KernelKind.VGH, pos)
    np.testing.assert_allclose(
        vgl["l"], vgh["hxx"] + vgh["hyy"] + vgh["hzz"], rtol=0, atol=1e-15
    )


def test_value_f64_matches_vgh_value():
    table = build_table(G10, 8, FillSpec.random(7))
    pos = (2.9, 8.8, 4.0)
    np.testing.assert_array_equal(
        value_f64(table, pos), evaluate_f64(table, KernelKind.VGH, pos)["v"]
    )


def test_stream_rel_error_zero_reference():
    got = {"v": np.array([1e-7, -2e-7])}
    want = {"v": np.zeros(2)}
    assert stream_rel_error(got, want) == pytest.approx(2e-7)
