"""Throughput metric, analytic traffic model, tile-size tuner, reports.

Throughput counts orbital-sample operations: one operation is one spline
evaluated at one position, so a run performs N_w * N * ns * niters of them
per kernel and T = operations / seconds.  Dividing T by ns * niters gives
the per-sample normalization T = N_w * N / t used when t covers a single
pass; both numbers are exposed.

The traffic model is analytic and deliberately independent of any
measurement: per evaluation a kernel reads 64 coefficient rows (64 * N
elements) and writes one element per output stream per spline, with one
FMA (2 flops) behind every accumulation.  Prefactor arithmetic is O(1)
per evaluation and excluded.  No FMA contraction is active in the
compiled kernels, which report metadata records.
"""

from __future__ import annotations

import csv
import io
import json
import os
import platform
import statistics
import time
from dataclasses import dataclass
from datetime import datetime, timezone

from . import __version__
from .errors import ComparisonError, ConfigError, DomainError
from .kernels import KernelKind, WalkerOutputsSoA, eval_batch
from .coeffs import build_table, tile_table
from .driver import BenchResult, RunConfig, generate_positions

STENCIL_POINTS = 64
FMA_ACTIVE = False


def coeff_reads_per_eval(n_splines: int) -> int:
    return STENCIL_POINTS * n_splines


def output_writes_per_eval(kind: KernelKind, layout: str, n_splines: int) -> int:
    return kind.output_streams(layout) * n_splines


def flops_per_eval(kind: KernelKind, layout: str, n_splines: int) -> int:
    return 2 * STENCIL_POINTS * kind.output_streams(layout) * n_splines


def read_bytes_per_eval(n_splines: int) -> int:
    return 4 * coeff_reads_per_eval(n_splines)


def write_bytes_per_eval(kind: KernelKind, layout: str, n_splines: int) -> int:
    return 4 * output_writes_per_eval(kind, layout, n_splines)


def arithmetic_intensity(kind: KernelKind, layout: str = "soa") -> float:
    """Model flops per byte of coefficient reads plus output writes.

    Independent of N: both numerator and denominator scale linearly.
    """
    streams = kind.output_streams(layout)
    return (2.0 * STENCIL_POINTS * streams) / (4.0 * (STENCIL_POINTS + streams))


@dataclass(frozen=True)
class TrafficModel:
    """Analytic per-evaluation memory traffic, independent of measurement."""

    kind: KernelKind
    layout: str
    n_splines: int

    @property
    def coeff_reads(self) -> int:
        return coeff_reads_per_eval(self.n_splines)

    @property
    def output_writes(self) -> int:
        return output_writes_per_eval(self.kind, self.layout, self.n_splines)

    @property
    def read_bytes(self) -> int:
        return read_bytes_per_eval(self.n_splines)

    @property
    def write_bytes(self) -> int:
        return write_bytes_per_eval(self.kind, self.layout, self.n_splines)

    @property
    def flops(self) -> int:
        return flops_per_eval(self.kind, self.layout, self.n_splines)

    @property
    def ai(self) -> float:
        return arithmetic_intensity(self.kind, self.layout)


def input_working_set_bytes(grid, tile_splines: int) -> int:
    """Coefficient bytes touched per tile: 4 * (nx*ny*nz) * N_b."""
    return 4 * grid.n_points * tile_splines


def output_working_set_bytes(kind: KernelKind, n_walkers: int, tile_splines: int,
                             layout: str = "soa") -> int:
    """Output bytes across walkers: 4 * streams * N_w * N_b (VGH: 40 N_w N_b)."""
    return 4 * kind.output_streams(layout) * n_walkers * tile_splines


def throughput(n_walkers: int, n_splines: int, ns: int, niters: int, seconds: float) -> float:
    """Operations per second, T = N_w * N * ns * niters / t."""
    if not seconds > 0.0:
        raise DomainError(f"seconds={seconds!r} must be positive")
    return (n_walkers * n_splines * ns * niters) / seconds


@dataclass(frozen=True)
class ThroughputRecord:
    kernel: str
    layout: str
    n_splines: int
    tile_size: int
    n_walkers: int
    n_th: int
    ns: int
    niters: int
    seconds: float
    throughput: float
    read_bytes: int
    write_bytes: int
    flops: int
    ai: float
    machine: str
    timestamp: str

    @property
    def throughput_per_sample(self) -> float:
        """Normalization N_w * N / t over the whole run, T / (ns * niters)."""
        return self.throughput / (self.ns * self.niters)


CSV_COLUMNS = (
    "kernel", "layout", "N", "Nb", "Nw", "nth", "ns", "niters", "seconds",
    "throughput", "read_bytes", "write_bytes", "flops", "ai", "machine", "timestamp",
)

_FIELD_BY_COLUMN = {
    "kernel": "kernel", "layout": "layout", "N": "n_splines", "Nb": "tile_size",
    "Nw": "n_walkers", "nth": "n_th", "ns": "ns", "niters": "niters",
    "seconds": "seconds", "throughput": "throughput", "read_bytes": "read_bytes",
    "write_bytes": "write_bytes", "flops": "flops", "ai": "ai",
    "machine": "machine", "timestamp": "timestamp",
}


def default_machine_label() -> str:
    return platform.node() or "unknown"


def records_from_result(result: BenchResult, machine: str | None = None,
                        timestamp: str | None = None) -> list:
    """One ThroughputRecord per enabled kernel of a finished run."""
    config = result.config
    machine = machine or default_machine_label()
    timestamp = timestamp or datetime.now(timezone.utc).isoformat()
    records = []
    for kind in config.kernels:
        seconds = result.kernel_seconds[kind]
        n = config.n_splines
        records.append(
            ThroughputRecord(
                kernel=kind.value,
                layout=config.layout,
                n_splines=n,
                tile_size=config.tile_size,
                n_walkers=result.n_walkers_effective,
                n_th=config.threads_per_walker,
                ns=config.samples_per_kernel,
                niters=config.iterations,
                seconds=seconds,
                throughput=throughput(
                    result.n_walkers_effective, n, config.samples_per_kernel,
                    config.iterations, seconds,
                ),
                read_bytes=read_bytes_per_eval(n),
                write_bytes=write_bytes_per_eval(kind, config.layout, n),
                flops=flops_per_eval(kind, config.layout, n),
                ai=arithmetic_intensity(kind, config.layout),
                machine=machine,
                timestamp=timestamp,
            )
        )
    return records


def speedup(baseline: ThroughputRecord, optimized: ThroughputRecord) -> float:
    """T_optimized / T_baseline for matching kernel, N and machine.

    Nested-threading comparisons fold in the strong-scaling factor: each
    record's throughput is weighted by its threads-per-walker count.
    """
    for attr in ("kernel", "n_splines", "machine"):
        a, b = getattr(baseline, attr), getattr(optimized, attr)
        if a != b:
            raise ComparisonError(f"records differ in {attr}: {a!r} vs {b!r}")
    return (optimized.throughput * optimized.n_th) / (baseline.throughput * baseline.n_th)


def droop_flags(records, threshold: float = 0.2) -> list:
    """Flag kernel/layout groups whose throughput droops more than
    `threshold` across a problem-size sweep (ideal T is independent of N)."""
    groups = {}
    for r in records:
        groups.setdefault((r.kernel, r.layout, r.tile_size, r.n_th), []).append(r)
    flags = []
    for key, rows in groups.items():
        if len(rows) < 2:
            continue
        best = max(rows, key=lambda r: r.throughput)
        worst = min(rows, key=lambda r: r.throughput)
        droop = 1.0 - worst.throughput / best.throughput
        if droop > threshold:
            flags.append(
                f"kernel={key[0]} layout={key[1]} Nb={key[2]} nth={key[3]}: throughput droops "
                f"{droop:.0%} from N={best.n_splines} to N={worst.n_splines}"
            )
    return flags


# ---------------------------------------------------------------------------
# tile-size autotuning


@dataclass(frozen=True)
class TuneResult:
    scanned: tuple
    throughputs: tuple
    best_tile: int
    best_throughput: float


def tile_candidates(n_splines: int) -> list:
    """Tile sizes 16, 32, ... doubling up to N.  N must be 16 * 2^k."""
    if n_splines < 16:
        raise ConfigError(f"n_splines={n_splines} < 16: tuning does not apply, run untiled")
    sizes = []
    nb = 16
    while nb < n_splines:
        sizes.append(nb)
        nb *= 2
    if nb != n_splines:
        raise ConfigError(
            f"n_splines={n_splines} is not 16 * 2^k; the tile scan doubles from 16 to N"
        )
    sizes.append(n_splines)
    return sizes


def tune_tile_size(config: RunConfig, kind: KernelKind,
                   budget_seconds: float = 0.5, min_samples: int = 20,
                   repeats: int = 3, base_table=None) -> TuneResult:
    """Scan tile sizes and return the argmax throughput.

    Runs a single-threaded, single-walker probe per candidate: `repeats`
    timed repetitions, each covering at least budget_seconds / repeats and
    min_samples / repeats samples; the candidate score is the median.
    Ties break toward the larger tile (fewer tiles, less prefactor
    recomputation).  n_splines < 16 means no scan: run untiled.  Passing an
    existing untiled SoA table as base_table skips the rebuild.
    """
    try:
        candidates = tile_candidates(config.n_splines)
    except ConfigError:
        if config.n_splines < 16:
            return TuneResult(scanned=(), throughputs=(), best_tile=0,
                              best_throughput=float("nan"))
        raise
    base = base_table
    if base is None:
        base = build_table(config.grid, config.n_splines, config.fill, layout="soa")
    chunk = 8
    min_per_rep = max(1, -(-min_samples // repeats))
    budget_per_rep = budget_seconds / repeats
    scores = []
    best_tile, best_throughput = 0, float("-inf")
    for nb in candidates:
        tiled = tile_table(base, nb)
        outs = [WalkerOutputsSoA(t.n_splines) for t in tiled.tiles]
        warm = generate_positions(config.seed, 0, 0, 2, config.grid).for_kind(kind)
        eval_batch(tiled, kind, warm, outs)
        reps = []
        for rep in range(repeats):
            pos = generate_positions(config.seed, 0, rep, chunk, config.grid).for_kind(kind)
            done = 0
            t0 = time.perf_counter()
            while True:
                eval_batch(tiled, kind, pos, outs)
                done += chunk
                elapsed = time.perf_counter() - t0
                if elapsed >= budget_per_rep and done >= min_per_rep:
                    break
            reps.append(done * config.n_splines / elapsed)
        score = statistics.median(reps)
        scores.append(score)
        if score >= best_throughput:  # scan ascends, so >= prefers larger tiles
            best_tile, best_throughput = nb, score
    return TuneResult(
        scanned=tuple(candidates),
        throughputs=tuple(scores),
        best_tile=best_tile,
        best_throughput=best_throughput,
    )


# ---------------------------------------------------------------------------
# report emission


def _record_row(record: ThroughputRecord) -> dict:
    return {col: getattr(record, _FIELD_BY_COLUMN[col]) for col in CSV_COLUMNS}


def render_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for record in records:
        row = _record_row(record)
        row["seconds"] = repr(row["seconds"])
        row["throughput"] = repr(row["throughput"])
        row["ai"] = repr(row["ai"])
        writer.writerow(row)
    return buf.getvalue()


def render_json(records, config_echo: dict | None = None) -> str:
    doc = {
        "meta": {
            "library_version": __version__,
            "fma_active": FMA_ACTIVE,
        },
        "config": config_echo or {},
        "records": [_record_row(r) for r in records],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def parse_report_json(text: str) -> list:
    doc = json.loads(text)
    records = []
    for row in doc["records"]:
        kwargs = {_FIELD_BY_COLUMN[col]: row[col] for col in CSV_COLUMNS}
        records.append(ThroughputRecord(**kwargs))
    return records


def emit_report(records, fmt: str = "csv", path: str = "-",
                config_echo: dict | None = None) -> str:
    """Render records and write them to `path` ('-' for stdout).

    Files are written atomically so a failing run never leaves a partial
    report behind."""
    if fmt == "csv":
        text = render_csv(records)
    elif fmt == "json":
        text = render_json(records, config_echo)
    else:
        raise ConfigError(f"unknown report format {fmt!r}")
    if path == "-":
        print(text, end="")
    else:
        tmp = f"{path}.tmp"
        try:
            with open(tmp, "w") as f:
                f.write(text)
            os.replace(tmp, path)
        except OSError:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    return text
