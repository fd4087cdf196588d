#!/usr/bin/env python3
"""Tile-size scan at a fixed problem size.

Produces the throughput-versus-tile-size curve for one kernel: the scan
starts at 16 and doubles up to N, and the argmax is the tile size to use
in production configs on this machine.

Example:
    python scripts/scan_tile_sizes.py --n 2048 --kernel vgh -o scan.csv
"""

import argparse
import csv
import sys

from bspb.coeffs import FillSpec
from bspb.driver import RunConfig
from bspb.grid import GridSpec
from bspb.kernels import KernelKind
from bspb.metrics import tune_tile_size


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=512)
    parser.add_argument("--grid", default="48,48,48")
    parser.add_argument("--kernel", default="vgh", choices=[k.value for k in KernelKind])
    parser.add_argument("--budget", type=float, default=0.5,
                        help="seconds of measurement per candidate")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("-o", "--output", default="-")
    args = parser.parse_args()

    grid = GridSpec(*(int(p) for p in args.grid.split(",")))
    config = RunConfig(
        n_splines=args.n,
        grid=grid,
        layout="soa",
        n_walkers=1,
        samples_per_kernel=1,
        iterations=1,
        seed=args.seed,
        kernels=(KernelKind(args.kernel),),
        fill=FillSpec.random(args.seed),
    )
    result = tune_tile_size(config, KernelKind(args.kernel), budget_seconds=args.budget)
    if not result.scanned:
        print(f"N={args.n} < 16: nothing to scan", file=sys.stderr)
        return

    sink = sys.stdout if args.output == "-" else open(args.output, "w", newline="")
    writer = csv.writer(sink)
    writer.writerow(["kernel", "N", "Nb", "throughput", "best"])
    for nb, t in zip(result.scanned, result.throughputs):
        writer.writerow([args.kernel, args.n, nb, repr(t), int(nb == result.best_tile)])
    if sink is not sys.stdout:
        sink.close()
    print(f"# best Nb={result.best_tile} at {result.best_throughput:,.0f} ops/s",
          file=sys.stderr)


if __name__ == "__main__":
    main()
