"""Command line entry point: bench, verify, tune and info subcommands.

Settings follow flags > config file > defaults; the BSPB_THREADS
environment variable overrides the thread count last.  Exit status is 0
on success, 1 when a verification fails and 2 on usage errors.  Usage
errors are raised before any output file is opened and reports are
written atomically, so a bad invocation never leaves partial files.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import __version__
from .checks import run_all
from .coeffs import FillSpec
from .driver import (
    RunConfig,
    effective_threads,
    run_benchmark,
    verify_retained,
)
from .errors import ConfigError, DomainError
from .grid import GridSpec
from .kernels import KernelKind
from .metrics import (
    FMA_ACTIVE,
    arithmetic_intensity,
    emit_report,
    input_working_set_bytes,
    output_working_set_bytes,
    records_from_result,
    tune_tile_size,
)

_DEFAULTS = {
    "n": 128,
    "grid": "48,48,48",
    "nb": 0,
    "layout": "soa",
    "kernels": "v,vgl,vgh",
    "walkers": 0,  # 0 = one per thread
    "ns": 512,
    "niters": 10,
    "threads": 0,  # 0 = cpu count
    "threads_per_walker": 1,
    "seed": 0,
    "format": "csv",
    "output": "-",
}


class UsageError(Exception):
    pass


def _add_common_flags(parser):
    parser.add_argument("--n", type=int, help="number of splines")
    parser.add_argument("--grid", help="grid counts NX,NY,NZ")
    parser.add_argument("--nb", type=int, help="tile size (aosoa layout only)")
    parser.add_argument("--layout", choices=("aos", "soa", "aosoa"))
    parser.add_argument("--kernels", help="comma list from v,vgl,vgh")
    parser.add_argument("--walkers", type=int, help="walker count (default: one per thread)")
    parser.add_argument("--ns", type=int, help="random samples per kernel per iteration")
    parser.add_argument("--niters", type=int, help="timed iterations")
    parser.add_argument("--threads", type=int, help="total worker threads")
    parser.add_argument("--threads-per-walker", type=int, dest="threads_per_walker")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--format", choices=("csv", "json"))
    parser.add_argument("-o", "--output", help="report path, '-' for stdout")
    parser.add_argument("--config", help="key=value settings file; flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bspb", description=__doc__)
    parser.add_argument("--version", action="version", version=f"bspb {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    bench = sub.add_parser("bench", help="run the walker benchmark and emit a report")
    _add_common_flags(bench)
    bench.add_argument(
        "--verify", action="store_true",
        help="check retained outputs against the float64 reference",
    )

    verify = sub.add_parser("verify", help="run the correctness suites")
    _add_common_flags(verify)

    tune = sub.add_parser("tune", help="scan tile sizes for the best throughput")
    _add_common_flags(tune)
    tune.add_argument("--budget", type=float, default=0.5,
                      help="seconds of measurement per candidate")

    info = sub.add_parser("info", help="print the resolved config and analytic model")
    _add_common_flags(info)
    return parser


def _read_config_file(path) -> dict:
    values = {}
    try:
        with open(path) as f:
            for lineno, raw in enumerate(f, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise UsageError(f"{path}:{lineno}: expected key = value, got {raw!r}")
                key, _, value = line.partition("=")
                values[key.strip().replace("-", "_")] = value.strip().strip("'\"")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    unknown = set(values) - set(_DEFAULTS)
    if unknown:
        raise UsageError(f"{path}: unknown settings {sorted(unknown)}")
    return values


def _resolve(args) -> dict:
    settings = dict(_DEFAULTS)
    if getattr(args, "config", None):
        settings.update(_read_config_file(args.config))
    for key in _DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            settings[key] = flag
    for key in ("n", "nb", "walkers", "ns", "niters", "threads", "threads_per_walker", "seed"):
        try:
            settings[key] = int(settings[key])
        except (TypeError, ValueError):
            raise UsageError(f"setting {key}={settings[key]!r} is not an integer") from None
    return settings


def _parse_grid(text) -> GridSpec:
    try:
        parts = [int(p) for p in str(text).split(",")]
    except ValueError:
        raise UsageError(f"--grid {text!r}: expected NX,NY,NZ integers") from None
    if len(parts) != 3:
        raise UsageError(f"--grid {text!r}: expected exactly three counts")
    return GridSpec(*parts)


def _parse_kernels(text) -> tuple:
    kinds = []
    for name in str(text).split(","):
        name = name.strip().lower()
        if not name:
            continue
        try:
            kinds.append(KernelKind(name))
        except ValueError:
            raise UsageError(f"--kernels: unknown kernel {name!r}") from None
    if not kinds:
        raise UsageError("--kernels: at least one of v,vgl,vgh required")
    return tuple(dict.fromkeys(kinds))


def _build_run_config(settings) -> RunConfig:
    grid = _parse_grid(settings["grid"])
    kernels = _parse_kernels(settings["kernels"])
    threads = settings["threads"] or (os.cpu_count() or 1)
    threads = effective_threads(threads)
    walkers = settings["walkers"] or threads
    layout = settings["layout"]
    nb = settings["nb"]
    if layout in ("aos", "soa") and nb:
        raise UsageError(
            f"--nb {nb} only applies to --layout aosoa; the {layout} layout is untiled"
        )
    if layout == "aosoa" and not nb:
        raise UsageError("--layout aosoa requires --nb (or run `bspb tune`)")
    try:
        return RunConfig(
            n_splines=settings["n"],
            grid=grid,
            tile_size=nb,
            layout=layout,
            n_walkers=walkers,
            samples_per_kernel=settings["ns"],
            iterations=settings["niters"],
            threads_total=threads,
            threads_per_walker=settings["threads_per_walker"],
            seed=settings["seed"],
            kernels=kernels,
            fill=FillSpec.random(settings["seed"]),
        )
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc


def _cmd_bench(args) -> int:
    settings = _resolve(args)
    config = _build_run_config(settings)
    result = run_benchmark(config)
    records = records_from_result(result)
    emit_report(records, fmt=settings["format"], path=settings["output"],
                config_echo=config.echo())
    for record in records:
        print(
            f"# {record.kernel:3s} t={record.seconds:.4f}s T={record.throughput:,.0f} ops/s "
            f"(per-sample T={record.throughput_per_sample:,.0f})",
            file=sys.stderr,
        )
    print(f"# position generation: {result.gen_seconds:.4f}s (untimed in t)", file=sys.stderr)
    if args.verify:
        rows = verify_retained(result)
        bad = [r for r in rows if not r[3]]
        worst = max(r[2] for r in rows)
        print(f"# verify: {len(rows) - len(bad)}/{len(rows)} retained outputs within "
              f"1e-5 of the float64 reference (worst {worst:.2e})", file=sys.stderr)
        if bad:
            return 1
    return 0


def _cmd_verify(args) -> int:
    settings = _resolve(args)
    results = run_all(seed=settings["seed"], n_splines=settings["n"])
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name:24s} ({r.seconds:6.2f}s)  {r.detail}")
        failed += not r.passed
    print(f"{len(results) - failed}/{len(results)} suites passed")
    return 1 if failed else 0


def _cmd_tune(args) -> int:
    settings = _resolve(args)
    # the scan builds its own tilings and probes single-threaded
    settings["layout"] = "soa"
    settings["nb"] = 0
    settings["threads_per_walker"] = 1
    config = _build_run_config(settings)
    kind = _parse_kernels(settings["kernels"])[-1]  # vgh under the default list
    result = tune_tile_size(config, kind, budget_seconds=args.budget)
    if not result.scanned:
        print(f"N={config.n_splines} < 16: no scan, run untiled")
        return 0
    print(f"tile scan for kernel={kind.value} N={config.n_splines} "
          f"grid={'x'.join(map(str, config.grid.counts))}")
    print(f"{'Nb':>6s} {'ops/s':>14s}")
    for nb, t in zip(result.scanned, result.throughputs):
        marker = "  <- best" if nb == result.best_tile else ""
        print(f"{nb:6d} {t:14,.0f}{marker}")
    print(f"best Nb = {result.best_tile} at {result.best_throughput:,.0f} ops/s")
    return 0


def _cmd_info(args) -> int:
    settings = _resolve(args)
    config = _build_run_config(settings)
    grid = config.grid
    print(f"bspb {__version__} (fma_active={FMA_ACTIVE})")
    print("config:")
    for key, value in config.echo().items():
        print(f"  {key} = {value}")
    nb = config.tile_size or config.n_splines
    print("footprints:")
    print(f"  coefficient table 4*Ng*N      = {input_working_set_bytes(grid, config.n_splines):,} bytes")
    print(f"  per-tile input set 4*Ng*Nb    = {input_working_set_bytes(grid, nb):,} bytes")
    for kind in config.kernels:
        ws = output_working_set_bytes(kind, config.n_walkers, nb)
        print(f"  {kind.value:3s} output set 4*S*Nw*Nb    = {ws:,} bytes")
    print("arithmetic intensity (model, flops/byte):")
    for kind in config.kernels:
        line = f"  {kind.value:3s} soa {arithmetic_intensity(kind, 'soa'):.3f}"
        if kind is KernelKind.VGH:
            line += f"   aos {arithmetic_intensity(kind, 'aos'):.3f}"
        print(line)
    return 0


def parse_and_dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 2
    handler = {
        "bench": _cmd_bench,
        "verify": _cmd_verify,
        "tune": _cmd_tune,
        "info": _cmd_info,
    }[args.command]
    try:
        return handler(args)
    except UsageError as exc:
        print(f"bspb {args.command}: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, DomainError) as exc:
        print(f"bspb {args.command}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(parse_and_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
