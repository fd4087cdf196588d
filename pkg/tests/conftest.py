import numpy as np
import pytest

from bspb.coeffs import FillSpec, build_table, convert_aos_to_soa, tile_table
from bspb.grid import GridSpec, basis_weights, basis_weights_batch, map_to_grid
from bspb.kernels import KernelKind, allocate_outputs, eval_batch


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile every kernel signature once so timing budgets measure the
    checks, not the JIT."""
    grid = GridSpec(4, 4, 4)
    aos = build_table(grid, 4, FillSpec.random(0), layout="aos")
    soa = convert_aos_to_soa(aos)
    tiled = tile_table(soa, 2)
    pos = np.array([[0.5, 1.5, 2.5]])
    for table in (aos, soa, tiled):
        out = allocate_outputs(table)
        for kind in KernelKind:
            eval_batch(table, kind, pos, out)
    map_to_grid((0.1, 0.2, 0.3), grid)
    basis_weights(0.5)
    basis_weights_batch(np.array([0.25, 0.75]))


@pytest.fixture
def grid12():
    return GridSpec(12, 12, 12)


@pytest.fixture
def random_soa(grid12):
    return build_table(grid12, 24, FillSpec.random(42))


@pytest.fixture
def random_aos(grid12):
    return build_table(grid12, 24, FillSpec.random(42), layout="aos")
