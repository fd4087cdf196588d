"""Named correctness suites shared by the verify CLI and the test suite.

Each check returns a CheckResult with a pass flag and a human-readable
detail line; nothing here depends on wall-clock performance.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .accounting import evaluate_counted
from .coeffs import FillSpec, build_table, convert_aos_to_soa, memory_footprint, tile_table
from .driver import RunConfig, run_benchmark
from .grid import GridSpec, basis_weights_batch
from .kernels import KernelKind, allocate_outputs, collect_streams, eval_batch
from .metrics import input_working_set_bytes, output_working_set_bytes
from .oracle import evaluate_f64, fd_gradient, fd_hessian, stream_rel_error

WEIGHT_SUM_TOL = 2e-6
D2_SUM_TOL = 2e-5
ORACLE_REL_TOL = 1e-5
EXACT_CONST_TOL = 1e-5
EXACT_LINEAR_TOL = 1e-4
FD_GRAD_REL_TOL = 1e-4
FD_HESS_REL_TOL = 1e-3
LAPLACIAN_REL_TOL = 1e-4


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _timed(name):
    def wrap(fn):
        def run(*args, **kwargs):
            t0 = time.perf_counter()
            passed, detail = fn(*args, **kwargs)
            return CheckResult(name, passed, detail, time.perf_counter() - t0)

        return run

    return wrap


def _divisors(n):
    return [d for d in range(1, n + 1) if n % d == 0]


@_timed("identity-weight-sums")
def check_identity(n_samples: int = 10_000, seed: int = 0, deltas=(0.5, 1.0, 2.0)):
    """Partition of unity and derivative-weight zero sums over random offsets."""
    rng = np.random.default_rng(seed)
    ts = rng.random(n_samples)
    worst = {"a": 0.0, "da": 0.0, "d2a": 0.0}
    for delta in deltas:
        w = basis_weights_batch(ts, delta).astype(np.float64)
        worst["a"] = max(worst["a"], np.abs(w[:, 0].sum(axis=1) - 1.0).max())
        worst["da"] = max(worst["da"], np.abs(w[:, 1].sum(axis=1)).max() * delta)
        worst["d2a"] = max(worst["d2a"], np.abs(w[:, 2].sum(axis=1)).max() * delta ** 2)
    passed = (
        worst["a"] <= WEIGHT_SUM_TOL
        and worst["da"] <= WEIGHT_SUM_TOL
        and worst["d2a"] <= D2_SUM_TOL
    )
    detail = (
        f"|sum(a)-1|<={worst['a']:.2e} |sum(da)|*d<={worst['da']:.2e} "
        f"|sum(d2a)|*d^2<={worst['d2a']:.2e} over {n_samples} offsets x {len(deltas)} spacings"
    )
    return passed, detail


def _interior_positions(rng, grid: GridSpec, count: int) -> np.ndarray:
    """Positions whose stencils avoid the periodic seam on every axis."""
    lo = np.asarray(grid.spacings)
    hi = np.asarray([(n - 3) * d for n, d in zip(grid.counts, grid.spacings)])
    return lo + rng.random((count, 3)) * (hi - lo)


@_timed("exact-fields")
def check_exact_fields(seed: int = 0, n_positions: int = 1000, constant: float = 2.5):
    """A constant table gives V=c and zero derivatives; a table equal to the
    x grid index gives V=x, Gx=1 and zero second derivatives (interior)."""
    grid = GridSpec(16, 16, 16)
    rng = np.random.default_rng(seed)
    worst_const, worst_lin = 0.0, 0.0

    table = build_table(grid, 16, FillSpec.constant(constant))
    out = allocate_outputs(table)
    positions = rng.random((n_positions, 3)) * np.asarray(grid.lengths)
    for pos in positions:
        eval_batch(table, KernelKind.VGH, pos, out)
        s = collect_streams(out, KernelKind.VGH)
        eval_batch(table, KernelKind.VGL, pos, out)
        lap = collect_streams(out, KernelKind.VGL)["l"]
        err = np.abs(s["v"] - constant).max()
        for name in ("gx", "gy", "gz", "hxx", "hxy", "hxz", "hyy", "hyz", "hzz"):
            err = max(err, np.abs(s[name]).max())
        err = max(err, np.abs(lap).max())
        worst_const = max(worst_const, err / abs(constant))

    table = build_table(grid, 16, FillSpec.linear_index("x"))
    out = allocate_outputs(table)
    for pos in _interior_positions(rng, grid, n_positions):
        eval_batch(table, KernelKind.VGH, pos, out)
        s = collect_streams(out, KernelKind.VGH)
        err = np.abs(s["v"] - pos[0]).max()
        err = max(err, np.abs(s["gx"] - 1.0).max())
        for name in ("gy", "gz", "hxx", "hxy", "hxz", "hyy", "hyz", "hzz"):
            err = max(err, np.abs(s[name]).max())
        worst_lin = max(worst_lin, err)

    passed = worst_const <= EXACT_CONST_TOL and worst_lin <= EXACT_LINEAR_TOL
    detail = (
        f"constant({constant}) rel err {worst_const:.2e}; "
        f"linear-index err {worst_lin:.2e} over {n_positions} positions each"
    )
    return passed, detail


@_timed("oracle-equivalence")
def check_oracle_equivalence(n_splines=(16, 48), seed: int = 0, n_positions: int = 1000):
    """AoS, SoA and every tiling agree with the float64 reference and with
    each other (bitwise, since all layouts accumulate in the same order)."""
    grid = GridSpec(16, 16, 16)
    rng = np.random.default_rng(seed)
    worst_oracle = 0.0
    checked = 0
    for n in n_splines:
        aos = build_table(grid, n, FillSpec.random(seed + n), layout="aos")
        soa = convert_aos_to_soa(aos)
        tilings = {nb: tile_table(soa, nb) for nb in _divisors(n)}
        tables = {"aos": aos, "soa": soa}
        tables.update({f"nb{nb}": t for nb, t in tilings.items()})
        outs = {name: allocate_outputs(t) for name, t in tables.items()}
        positions = rng.random((n_positions, 3)) * np.asarray(grid.lengths)
        for pos in positions:
            streams = {}
            for name, t in tables.items():
                eval_batch(t, KernelKind.VGH, pos, outs[name])
                streams[name] = collect_streams(outs[name], KernelKind.VGH)
            ref_streams = streams["soa"]
            for name, got in streams.items():
                for key, arr in got.items():
                    if not np.array_equal(arr, ref_streams[key]):
                        return False, f"{name} differs from soa in {key} at position {pos}"
            ref = evaluate_f64(soa, KernelKind.VGH, pos)
            worst_oracle = max(worst_oracle, stream_rel_error(ref_streams, ref))
            checked += 1
    passed = worst_oracle <= ORACLE_REL_TOL
    detail = (
        f"{len(n_splines)}xN layouts bitwise-identical and within {worst_oracle:.2e} "
        f"of the float64 reference over {checked} position checks"
    )
    return passed, detail


@_timed("derivative-checks")
def check_derivatives(seed: int = 0, n_positions: int = 200, h: float = 1e-3):
    """Kernel gradient/Hessian against float64 central differences of the
    value, and the VGL Laplacian against the VGH Hessian trace.

    Offsets are kept h away from cell edges: second differences straddling a
    knot of a piecewise cubic pick up an O(h) error from the jump in the
    third derivative, which is a limit of the difference oracle, not of the
    kernels.
    """
    grid = GridSpec(12, 12, 12)
    table = build_table(grid, 16, FillSpec.random(seed + 1))
    out = allocate_outputs(table)
    rng = np.random.default_rng(seed)
    cells = rng.integers(0, 12, size=(n_positions, 3))
    fracs = 0.05 + 0.9 * rng.random((n_positions, 3))
    positions = (cells + fracs) * np.asarray(grid.spacings)
    worst_g, worst_h, worst_l = 0.0, 0.0, 0.0
    for pos in positions:
        eval_batch(table, KernelKind.VGH, pos, out)
        s = collect_streams(out, KernelKind.VGH)
        eval_batch(table, KernelKind.VGL, pos, out)
        lap = collect_streams(out, KernelKind.VGL)["l"]
        worst_g = max(worst_g, stream_rel_error(s, fd_gradient(table, pos, h)))
        worst_h = max(worst_h, stream_rel_error(s, fd_hessian(table, pos, h)))
        trace = {
            "l": s["hxx"].astype(np.float64) + s["hyy"] + s["hzz"]
        }
        worst_l = max(worst_l, stream_rel_error({"l": lap}, trace))
    passed = (
        worst_g <= FD_GRAD_REL_TOL and worst_h <= FD_HESS_REL_TOL and worst_l <= LAPLACIAN_REL_TOL
    )
    detail = (
        f"gradient vs FD {worst_g:.2e}, hessian vs FD {worst_h:.2e}, "
        f"laplacian vs trace {worst_l:.2e} over {n_positions} positions"
    )
    return passed, detail


@_timed("thread-determinism")
def check_determinism(seed: int = 7, n_splines: int = 256, tile_size: int = 64):
    """Retained outputs are bitwise identical for every combination of
    threads_total in {1, 2, 8} and threads_per_walker in {1, 2, 4}."""
    grid = GridSpec(8, 8, 8)
    base = dict(
        n_splines=n_splines, grid=grid, layout="aosoa", tile_size=tile_size,
        n_walkers=4, samples_per_kernel=4, iterations=2, seed=seed,
        fill=FillSpec.random(seed),
    )
    results = {}
    for threads in (1, 2, 8):
        for n_th in (1, 2, 4):
            if threads % n_th != 0:
                continue
            cfg = RunConfig(threads_total=threads, threads_per_walker=n_th, **base)
            results[(threads, n_th)] = run_benchmark(cfg)
    ref_key = (1, 1)
    ref = results[ref_key]
    compared = 0
    for key, res in results.items():
        common = set(ref.retained) & set(res.retained)
        if not common:
            return False, f"no common walkers between {ref_key} and {key}"
        for w in common:
            for kind, streams in ref.retained[w].items():
                for name, arr in streams.items():
                    if not np.array_equal(arr, res.retained[w][kind][name]):
                        return False, (
                            f"walker {w} {kind.value}/{name} differs between "
                            f"{ref_key} and {key}"
                        )
                    compared += 1
    return True, f"{len(results)} thread configs, {compared} streams bitwise identical"


@_timed("access-accounting")
def check_accounting(n_splines: int = 24, seed: int = 0):
    """Instrumented kernels touch exactly 64 rows and 64*N elements and
    write 1N / 5N / 10N (SoA) or 13N (AoS VGH) output elements."""
    grid = GridSpec(8, 8, 8)
    aos = build_table(grid, n_splines, FillSpec.random(seed), layout="aos")
    soa = convert_aos_to_soa(aos)
    pos = (2.3, 4.7, 6.1)
    expected = {
        ("soa", KernelKind.V): 1,
        ("soa", KernelKind.VGL): 5,
        ("soa", KernelKind.VGH): 10,
        ("aos", KernelKind.V): 1,
        ("aos", KernelKind.VGL): 5,
        ("aos", KernelKind.VGH): 13,
    }
    for (layout, kind), streams in expected.items():
        table = soa if layout == "soa" else aos
        _, counts = evaluate_counted(table, kind, pos)
        ok = (
            counts.coeff_rows == 64
            and counts.coeff_elements == 64 * n_splines
            and counts.output_elements == streams * n_splines
            and counts.fma_ops == 64 * streams * n_splines
        )
        if not ok:
            return False, f"{layout}/{kind.value}: unexpected counts {counts}"
    return True, f"reads=64N and writes per kernel/layout match the model at N={n_splines}"


@_timed("footprint-formulas")
def check_footprints():
    """Allocated bytes match 4*Ng*N for SoA tables and 4*streams*Nw*Nb for
    walker outputs (40*Nw*Nb for VGH)."""
    grid = GridSpec(48, 48, 48)
    table = build_table(grid, 128, FillSpec.constant(1.0))
    got = memory_footprint(table)
    want = input_working_set_bytes(grid, 128)
    if got != want or want != 56_623_104:
        return False, f"SoA table bytes {got} != {want}"
    out_bytes = output_working_set_bytes(KernelKind.VGH, 256, 512)
    if out_bytes != 40 * 256 * 512:
        return False, f"output working set {out_bytes} != 40*256*512"
    from .kernels import WalkerOutputsSoA

    per_walker = WalkerOutputsSoA(512)
    vgh_bytes = per_walker.v.nbytes + per_walker.g.nbytes + per_walker.h.nbytes
    if vgh_bytes * 256 != out_bytes:
        return False, f"allocated VGH streams {vgh_bytes}*256 != {out_bytes}"
    return True, f"table={got} bytes, VGH outputs 40*Nw*Nb={out_bytes} bytes"


def run_all(seed: int = 0, n_splines: int = 128) -> list:
    """The full verification battery used by the verify subcommand."""
    sizes = sorted({16, min(n_splines, 48)})
    return [
        check_identity(seed=seed),
        check_exact_fields(seed=seed),
        check_oracle_equivalence(n_splines=tuple(sizes), seed=seed, n_positions=200),
        check_derivatives(seed=seed, n_positions=60),
        check_determinism(seed=seed),
        check_accounting(seed=seed),
        check_footprints(),
    ]
