"""Walker loop: deterministic sampling, batched kernel timing, threading.

Each walker owns its output buffers and draws its own positions from a
counter-based Philox stream, so results are a pure function of
(seed, walker, iteration) and never depend on thread scheduling.  Two
execution modes:

  * run_population: one worker thread per walker (threads_total workers,
    walkers queued onto them).
  * run_nested: teams of threads_per_walker threads share one walker,
    splitting its tiles round-robin (thread r takes tiles m with
    m % n_th == r).  The walker count drops by the same factor, which
    keeps the output working set constant, and there is no synchronization
    inside a sample batch, only a join per kernel batch.

Only kernel execution is timed; position generation is accumulated
separately.  Per-kernel time t_X is the maximum over workers of their
accumulated time, with per-walker times kept for skew diagnostics.
"""

from __future__ import annotations

import os
import threading
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .coeffs import FillSpec, build_table, tile_table
from .errors import ConfigError
from .grid import GridSpec
from .kernels import (
    KernelKind,
    WalkerOutputsAoS,
    WalkerOutputsSoA,
    collect_streams,
    eval_batch,
)

ALL_KERNELS = (KernelKind.V, KernelKind.VGL, KernelKind.VGH)
_KERNEL_STREAM_ID = {KernelKind.V: 0, KernelKind.VGL: 1, KernelKind.VGH: 2}

THREADS_ENV_VAR = "BSPB_THREADS"


def effective_threads(requested: int) -> int:
    """threads_total, after the BSPB_THREADS override."""
    env = os.environ.get(THREADS_ENV_VAR)
    if env is not None:
        try:
            value = int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV_VAR}={env!r} is not an integer") from None
        if value < 1:
            raise ConfigError(f"{THREADS_ENV_VAR}={value} must be >= 1")
        return value
    return requested


@dataclass(frozen=True)
class RunConfig:
    n_splines: int
    grid: GridSpec
    tile_size: int = 0  # 0 = untiled
    layout: str = "soa"
    n_walkers: int = 1
    samples_per_kernel: int = 512
    iterations: int = 10
    threads_total: int = 1
    threads_per_walker: int = 1
    seed: int = 0
    kernels: tuple = ALL_KERNELS
    fill: FillSpec = field(default_factory=lambda: FillSpec.random(0))
    warmup: bool = True
    debug_ownership: bool = False

    def __post_init__(self):
        if self.layout not in ("aos", "soa", "aosoa"):
            raise ConfigError(f"unknown layout {self.layout!r}")
        if self.n_splines < 1:
            raise ConfigError("n_splines must be >= 1")
        if self.samples_per_kernel < 1:
            raise ConfigError("samples_per_kernel must be >= 1")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.n_walkers < 1:
            raise ConfigError("n_walkers must be >= 1")
        if self.threads_total < 1 or self.threads_per_walker < 1:
            raise ConfigError("thread counts must be >= 1")
        if self.threads_total % self.threads_per_walker != 0:
            raise ConfigError(
                f"threads_per_walker={self.threads_per_walker} does not divide "
                f"threads_total={self.threads_total}"
            )
        if self.layout == "aosoa":
            if self.tile_size < 1:
                raise ConfigError("aosoa layout requires tile_size >= 1")
            if self.n_splines % self.tile_size != 0:
                raise ConfigError(
                    f"tile_size={self.tile_size} does not divide n_splines={self.n_splines}"
                )
        else:
            if self.tile_size:
                raise ConfigError(f"layout={self.layout!r} does not take a tile_size")
            if self.threads_per_walker > 1:
                raise ConfigError("threads_per_walker > 1 requires the aosoa layout")
        if not all(isinstance(k, KernelKind) for k in self.kernels):
            raise ConfigError("kernels must be KernelKind members")

    @property
    def n_tiles(self) -> int:
        return self.n_splines // self.tile_size if self.tile_size else 1

    @classmethod
    def from_echo(cls, echo: dict) -> "RunConfig":
        """Rebuild a config from its report echo; the resulting run retains
        identical outputs."""
        fill = echo["fill"]
        return cls(
            n_splines=echo["n_splines"],
            grid=GridSpec(*echo["grid"], *echo["spacings"]),
            tile_size=echo["tile_size"],
            layout=echo["layout"],
            n_walkers=echo["n_walkers"],
            samples_per_kernel=echo["samples_per_kernel"],
            iterations=echo["iterations"],
            threads_total=echo["threads_total"],
            threads_per_walker=echo["threads_per_walker"],
            seed=echo["seed"],
            kernels=tuple(KernelKind(k) for k in echo["kernels"]),
            fill=FillSpec(fill["kind"], value=fill["value"], axis=fill["axis"],
                          seed=fill["seed"]),
        )

    def echo(self) -> dict:
        g = self.grid
        return {
            "n_splines": self.n_splines,
            "grid": [g.nx, g.ny, g.nz],
            "spacings": [g.dx, g.dy, g.dz],
            "tile_size": self.tile_size,
            "layout": self.layout,
            "n_walkers": self.n_walkers,
            "samples_per_kernel": self.samples_per_kernel,
            "iterations": self.iterations,
            "threads_total": self.threads_total,
            "threads_per_walker": self.threads_per_walker,
            "seed": self.seed,
            "kernels": [k.value for k in self.kernels],
            "fill": {
                "kind": self.fill.kind,
                "value": self.fill.value,
                "axis": self.fill.axis,
                "seed": self.fill.seed,
            },
        }


@dataclass
class SampleSet:
    """Per-walker, per-iteration positions: one (ns, 3) array per kernel."""

    v: np.ndarray
    vgl: np.ndarray
    vgh: np.ndarray

    def for_kind(self, kind: KernelKind) -> np.ndarray:
        return {KernelKind.V: self.v, KernelKind.VGL: self.vgl, KernelKind.VGH: self.vgh}[kind]


def _position_stream(seed, walker, iteration, kernel_id, ns, grid) -> np.ndarray:
    counter = np.array([0, walker, iteration, kernel_id], dtype=np.uint64)
    key = np.array([seed % (1 << 64), 0], dtype=np.uint64)
    rng = np.random.Generator(np.random.Philox(counter=counter, key=key))
    u = rng.random((ns, 3))
    return u * np.asarray(grid.lengths)


def generate_positions(seed, walker, iteration, ns, grid) -> SampleSet:
    """Uniform positions over the domain, indexed by
    (seed, walker, iteration, kernel, sample); independent of scheduling."""
    streams = {
        kind: _position_stream(seed, walker, iteration, kid, ns, grid)
        for kind, kid in _KERNEL_STREAM_ID.items()
    }
    return SampleSet(
        v=streams[KernelKind.V],
        vgl=streams[KernelKind.VGL],
        vgh=streams[KernelKind.VGH],
    )


class WalkerState:
    """Output buffers and timing accumulators owned by one walker."""

    def __init__(self, walker_id: int, config: RunConfig):
        self.walker_id = walker_id
        n = config.n_splines
        if config.layout == "aos":
            self.outputs = WalkerOutputsAoS(n)
        elif config.layout == "soa":
            self.outputs = WalkerOutputsSoA(n)
        else:
            self.outputs = [WalkerOutputsSoA(config.tile_size) for _ in range(config.n_tiles)]
        self.kernel_seconds = {k: 0.0 for k in config.kernels}
        self.gen_seconds = 0.0
        self.invocations = {k: 0 for k in config.kernels}


def run_walker_iteration(
    state: WalkerState, table, samples: SampleSet, kernels, timed=True, retain_into=None
):
    """Run one iteration's batches; returns per-kernel wall-time deltas.

    The kernels share the walker's v/g buffers, so when retain_into is given
    each kernel's streams are snapshotted right after its batch.
    """
    deltas = {}
    for kind in kernels:
        pos = samples.for_kind(kind)
        t0 = time.perf_counter()
        eval_batch(table, kind, pos, state.outputs)
        dt = time.perf_counter() - t0
        deltas[kind] = dt
        if timed:
            state.kernel_seconds[kind] += dt
            state.invocations[kind] += pos.shape[0]
        if retain_into is not None:
            retain_into[kind] = collect_streams(state.outputs, kind)
    return deltas


@dataclass
class BenchResult:
    config: RunConfig
    n_walkers_effective: int
    threads_total: int
    kernel_seconds: dict  # kind -> t_X (max over workers)
    per_walker_seconds: dict  # walker -> {kind: seconds}
    per_worker_seconds: dict  # worker -> {kind: seconds}
    gen_seconds: float
    invocations: dict  # kind -> count
    operations: dict  # kind -> N_w * N * ns * niters
    retained: dict  # walker -> {kind: {stream: float32 array}}
    ownership_log: list = field(default_factory=list)


def _build_table_for(config: RunConfig):
    if config.layout == "aos":
        return build_table(config.grid, config.n_splines, config.fill, layout="aos")
    base = build_table(config.grid, config.n_splines, config.fill, layout="soa")
    if config.layout == "aosoa":
        return tile_table(base, config.tile_size)
    return base


def _aggregate(config, worker_rows, n_walkers_effective, threads_total, ownership_log):
    per_worker = {}
    per_walker = {}
    retained = {}
    gen_seconds = 0.0
    invocations = {k: 0 for k in config.kernels}
    for worker_key, walker_id, kernel_seconds, gen_s, inv, streams in worker_rows:
        bucket = per_worker.setdefault(worker_key, {k: 0.0 for k in config.kernels})
        for kind, sec in kernel_seconds.items():
            bucket[kind] += sec
        per_walker[walker_id] = dict(kernel_seconds)
        retained[walker_id] = streams
        gen_seconds += gen_s
        for kind, count in inv.items():
            invocations[kind] += count
    kernel_seconds = {
        k: max(b[k] for b in per_worker.values()) if per_worker else 0.0
        for k in config.kernels
    }
    ns, niters = config.samples_per_kernel, config.iterations
    operations = {
        k: n_walkers_effective * config.n_splines * ns * niters for k in config.kernels
    }
    return BenchResult(
        config=config,
        n_walkers_effective=n_walkers_effective,
        threads_total=threads_total,
        kernel_seconds=kernel_seconds,
        per_walker_seconds=per_walker,
        per_worker_seconds=per_worker,
        gen_seconds=gen_seconds,
        invocations=invocations,
        operations=operations,
        retained=retained,
        ownership_log=ownership_log,
    )


def run_population(config: RunConfig, table=None) -> BenchResult:
    """Walker-level parallelism: workers own whole walkers."""
    threads_total = effective_threads(config.threads_total)
    if threads_total % config.threads_per_walker != 0:
        raise ConfigError(
            f"threads_per_walker={config.threads_per_walker} does not divide "
            f"effective threads_total={threads_total}"
        )
    if config.threads_per_walker > 1:
        return run_nested(config, table)
    if table is None:
        table = _build_table_for(config)
    ownership_log = []
    log_lock = threading.Lock()

    def walker_task(walker_id):
        state = WalkerState(walker_id, config)
        ns = config.samples_per_kernel
        retained = {}
        if config.warmup:
            warm = generate_positions(config.seed, walker_id, 0, ns, config.grid)
            run_walker_iteration(state, table, warm, config.kernels, timed=False)
        for it in range(config.iterations):
            t0 = time.perf_counter()
            samples = generate_positions(config.seed, walker_id, it, ns, config.grid)
            state.gen_seconds += time.perf_counter() - t0
            last = it == config.iterations - 1
            run_walker_iteration(
                state, table, samples, config.kernels,
                retain_into=retained if last else None,
            )
            if config.debug_ownership:
                with log_lock:
                    ownership_log.append((it, None, walker_id, None, threading.get_ident()))
        return (
            threading.get_ident(),
            walker_id,
            state.kernel_seconds,
            state.gen_seconds,
            state.invocations,
            retained,
        )

    try:
        with ThreadPoolExecutor(max_workers=threads_total) as pool:
            rows = list(pool.map(walker_task, range(config.n_walkers)))
    except RuntimeError as exc:
        raise RuntimeError(f"worker pool failed for config {config.echo()}") from exc
    return _aggregate(config, rows, config.n_walkers, threads_total, ownership_log)


def run_nested(config: RunConfig, table=None) -> BenchResult:
    """Nested threading: teams of threads_per_walker threads split one
    walker's tiles round-robin; the walker count drops by the same factor."""
    if config.layout != "aosoa":
        raise ConfigError("nested threading requires the aosoa layout")
    threads_total = effective_threads(config.threads_total)
    n_th = config.threads_per_walker
    if n_th > threads_total:
        raise ConfigError(f"threads_per_walker={n_th} exceeds threads_total={threads_total}")
    if threads_total % n_th != 0:
        raise ConfigError(
            f"threads_per_walker={n_th} does not divide effective threads_total={threads_total}"
        )
    if config.n_tiles < n_th:
        warnings.warn(
            f"only {config.n_tiles} tiles for {n_th} threads per walker; "
            "some team threads will idle",
            stacklevel=2,
        )
    if table is None:
        table = _build_table_for(config)
    n_teams = threads_total // n_th
    n_walkers_effective = max(1, config.n_walkers // n_th)
    ownership_log = []
    log_lock = threading.Lock()

    def tile_subset(rank):
        return list(range(rank, config.n_tiles, n_th))

    def team_task(team_id):
        rows = []
        with ThreadPoolExecutor(max_workers=n_th) as team_pool:
            for walker_id in range(team_id, n_walkers_effective, n_teams):
                state = WalkerState(walker_id, config)
                ns = config.samples_per_kernel
                retained = {}
                iteration_plan = [(0, False)] if config.warmup else []
                iteration_plan += [(it, True) for it in range(config.iterations)]
                for plan_step, (it, timed) in enumerate(iteration_plan):
                    t0 = time.perf_counter()
                    samples = generate_positions(config.seed, walker_id, it, ns, config.grid)
                    if timed:
                        state.gen_seconds += time.perf_counter() - t0
                    last = timed and it == config.iterations - 1
                    for kind in config.kernels:
                        pos = samples.for_kind(kind)

                        def subset_task(rank):
                            for m in tile_subset(rank):
                                eval_batch(table.tiles[m], kind, pos, state.outputs[m])
                                if config.debug_ownership:
                                    with log_lock:
                                        ownership_log.append(
                                            (plan_step, kind.value, walker_id, m,
                                             threading.get_ident())
                                        )

                        t0 = time.perf_counter()
                        # scatter the tile subsets, join at the batch boundary
                        list(team_pool.map(subset_task, range(n_th)))
                        dt = time.perf_counter() - t0
                        if timed:
                            state.kernel_seconds[kind] += dt
                            state.invocations[kind] += pos.shape[0]
                        if last:
                            retained[kind] = collect_streams(state.outputs, kind)
                rows.append(
                    (
                        f"team-{team_id}",
                        walker_id,
                        state.kernel_seconds,
                        state.gen_seconds,
                        state.invocations,
                        retained,
                    )
                )
        return rows

    try:
        with ThreadPoolExecutor(max_workers=n_teams) as pool:
            nested_rows = [row for rows in pool.map(team_task, range(n_teams)) for row in rows]
    except RuntimeError as exc:
        raise RuntimeError(f"worker pool failed for config {config.echo()}") from exc
    return _aggregate(
        config, nested_rows, n_walkers_effective, threads_total, ownership_log
    )


def run_benchmark(config: RunConfig, table=None) -> BenchResult:
    """Dispatch to the population or nested scheme based on the config."""
    if config.threads_per_walker > 1:
        return run_nested(config, table)
    return run_population(config, table)


def verify_retained(result: BenchResult, table=None, rel_tol: float = 1e-5):
    """Check every retained output against the float64 reference.

    Returns a list of (walker, kernel, rel_err, ok) tuples.  Retained
    outputs hold the final sample of the final iteration.
    """
    from .oracle import evaluate_f64, stream_rel_error

    config = result.config
    if table is None:
        table = _build_table_for(config)
    ns = config.samples_per_kernel
    last_iter = config.iterations - 1
    rows = []
    for walker_id, by_kind in sorted(result.retained.items()):
        samples = generate_positions(config.seed, walker_id, last_iter, ns, config.grid)
        for kind, streams in by_kind.items():
            pos = samples.for_kind(kind)[-1]
            ref = evaluate_f64(table, kind, pos)
            err = stream_rel_error(streams, ref)
            rows.append((walker_id, kind, err, err <= rel_tol))
    return rows
