import numpy as np
import pytest

from bspb.accounting import evaluate_counted
from bspb.coeffs import FillSpec, build_table, convert_aos_to_soa, tile_table
from bspb.grid import GridSpec
from bspb.kernels import KernelKind, allocate_outputs, collect_streams, eval_batch

G8 = GridSpec(8, 8, 8)
POS = (2.3, 4.7, 6.1)


@pytest.fixture(scope="module")
def tables():
    aos = build_table(G8, 24, FillSpec.random(6), layout="aos")
    soa = convert_aos_to_soa(aos)
    return aos, soa


@pytest.mark.parametrize(
    "layout,kind,streams",
    [
        ("soa", KernelKind.V, 1),
        ("soa", KernelKind.VGL, 5),
        ("soa", KernelKind.VGH, 10),
        ("aos", KernelKind.V, 1),
        ("aos", KernelKind.VGL, 5),
        ("aos", KernelKind.VGH, 13),
    ],
)
def test_counts_match_traffic_model(tables, layout, kind, streams):
    aos, soa = tables
    table = aos if layout == "aos" else soa
    n = table.n_splines
    _, counts = evaluate_counted(table, kind, POS)
    assert counts.coeff_rows == 64
    assert counts.coeff_elements == 64 * n
    assert counts.output_elements == streams * n
    assert counts.fma_ops == 64 * streams * n
    assert sum(counts.stream_writes.values()) == streams * n


@pytest.mark.parametrize("kind", list(KernelKind))
def test_mirror_outputs_match_kernels_bitwise(tables, kind):
    aos, soa = tables
    for table in (aos, soa):
        streams, _ = evaluate_counted(table, kind, POS)
        out = allocate_outputs(table)
        eval_batch(table, kind, POS, out)
        fast = collect_streams(out, kind)
        for name in fast:
            np.testing.assert_array_equal(streams[name], fast[name])


def test_aos_vgh_reports_mirrored_entries(tables):
    aos, _ = tables
    streams, counts = evaluate_counted(aos, KernelKind.VGH, POS)
    np.testing.assert_array_equal(streams["hxy"], streams["hyx"])
    np.testing.assert_array_equal(streams["hxz"], streams["hzx"])
    np.testing.assert_array_equal(streams["hyz"], streams["hzy"])
    assert counts.stream_writes["hyx"] == aos.n_splines


def test_tiled_counts_total_to_untiled(tables):
    _, soa = tables
    tiled = tile_table(soa, 6)
    streams, counts = evaluate_counted(tiled, KernelKind.VGH, POS)
    assert counts.coeff_rows == 64 * tiled.n_tiles  # rows repeat per tile
    assert counts.coeff_elements == 64 * soa.n_splines
    assert counts.output_elements == 10 * soa.n_splines
    untiled_streams, _ = evaluate_counted(soa, KernelKind.VGH, POS)
    for name in untiled_streams:
        np.testing.assert_array_equal(streams[name], untiled_streams[name])
