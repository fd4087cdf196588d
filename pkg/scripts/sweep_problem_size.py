#!/usr/bin/env python3
"""Throughput versus problem size for each layout.

Sweeps the spline count at a fixed grid, benchmarks the VGH kernel per
layout and writes one CSV with all records plus droop warnings to stderr.
Ideal throughput is flat across N; the droop flag marks layouts that fall
more than 20% from their best.

Example:
    python scripts/sweep_problem_size.py --sizes 128,256,512 --ns 16 -o sweep.csv
"""

import argparse
import sys

from bspb.coeffs import FillSpec, build_table, tile_table
from bspb.driver import RunConfig, run_population
from bspb.grid import GridSpec
from bspb.kernels import KernelKind
from bspb.metrics import droop_flags, emit_report, records_from_result


def bench(table, layout, tile_size, n, grid, args):
    config = RunConfig(
        n_splines=n,
        grid=grid,
        tile_size=tile_size,
        layout=layout,
        n_walkers=args.walkers,
        samples_per_kernel=args.ns,
        iterations=args.niters,
        threads_total=args.threads,
        seed=args.seed,
        kernels=(KernelKind.VGH,),
        fill=FillSpec.linear_index("x"),
    )
    result = run_population(config, table)
    return records_from_result(result)[0]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="128,256,512,1024",
                        help="comma list of spline counts")
    parser.add_argument("--grid", default="48,48,48")
    parser.add_argument("--nb", type=int, default=0,
                        help="also bench a tiling with this tile size")
    parser.add_argument("--layouts", default="aos,soa")
    parser.add_argument("--walkers", type=int, default=1)
    parser.add_argument("--ns", type=int, default=16)
    parser.add_argument("--niters", type=int, default=2)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("-o", "--output", default="-")
    args = parser.parse_args()

    grid = GridSpec(*(int(p) for p in args.grid.split(",")))
    sizes = [int(s) for s in args.sizes.split(",")]
    layouts = args.layouts.split(",")
    fill = FillSpec.linear_index("x")

    records = []
    for n in sizes:
        soa = build_table(grid, n, fill)
        if "aos" in layouts:
            aos = build_table(grid, n, fill, layout="aos")
            records.append(bench(aos, "aos", 0, n, grid, args))
            del aos
        if "soa" in layouts:
            records.append(bench(soa, "soa", 0, n, grid, args))
        if args.nb and n % args.nb == 0:
            tiled = tile_table(soa, args.nb)
            records.append(bench(tiled, "aosoa", args.nb, n, grid, args))
            del tiled
        del soa
        print(f"# N={n} done", file=sys.stderr)

    emit_report(records, fmt="csv", path=args.output)
    for flag in droop_flags(records):
        print(f"# droop: {flag}", file=sys.stderr)


if __name__ == "__main__":
    main()
