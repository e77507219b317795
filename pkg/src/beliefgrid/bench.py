"""Per-phase timing of the filter on a synthetic map, plus a thread-count
determinism check."""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .belief import (MotionNoise, OdometryDelta, belief_map, build_kernels, channel_shifts,
                     init_uniform, kernel_activation, kernel_offset, step)
from .maps import OccupancyMap
from .observation import LikelihoodModel, dither_samples, observation_update
from .simulator import simulate_scan

PHASES = ("shift+mask+spatial", "angular+normalize", "step", "observation")


def bench_map(width: int, height: int, seed: int = 0, density: float = 0.03) -> OccupancyMap:
    """Random axis-aligned blocks covering roughly ``density`` of the area."""
    rng = np.random.default_rng(seed)
    occ = np.zeros((height, width), dtype=bool)
    n = max(1, int(density * width * height / 16))
    xs = rng.integers(0, width, n)
    ys = rng.integers(0, height, n)
    for x, y in zip(xs, ys):
        occ[y:y + 4, x:x + 4] = True
    return OccupancyMap(occ, 0.1)


def motion_sequence(n: int) -> list[OdometryDelta]:
    """Deterministic mix of forward, lateral and turning deltas."""
    return [OdometryDelta(0.1 + 0.01 * (k % 3), 0.02 * ((k % 5) - 2), 0.01 * ((k % 7) - 3))
            for k in range(n)]


@dataclass
class BenchReport:
    size: tuple
    dtype: str
    backend: str
    threads: int
    steps: int
    samples: dict = field(default_factory=dict)   # phase -> seconds per call
    deterministic: bool | None = None

    def stats(self, phase: str) -> dict:
        v = np.asarray(self.samples.get(phase, []), dtype=float) * 1e3
        if v.size == 0:
            return {}
        return {"mean": float(v.mean()), "median": float(np.median(v)),
                "p99": float(np.percentile(v, 99)), "n": int(v.size)}

    def format(self) -> str:
        w, h, n = self.size
        lines = [f"tensor {w}x{h}x{n} {self.dtype} backend={self.backend} "
                 f"threads={self.threads} steps={self.steps}"]
        for ph in PHASES:
            st = self.stats(ph)
            if st:
                lines.append(f"  {ph:<20s} mean {st['mean']:9.3f} ms  median {st['median']:9.3f} ms"
                             f"  p99 {st['p99']:9.3f} ms  (n={st['n']})")
        det = {True: "identical", False: "MISMATCH", None: "not checked (single thread)"}
        lines.append(f"  determinism across thread counts: {det[self.deterministic]}")
        return "\n".join(lines)


def _kernels(channels: int, resolution: float):
    # coarse channel counts trip the degenerate angular-kernel warning; expected here
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return build_kernels(MotionNoise(), channels, resolution)


def _backend(name: str | None):
    if name is None:
        return kernels.backend
    if name == "numba":
        if kernels.numba_backend is None:
            raise RuntimeError("numba backend disabled (BELIEFGRID_NO_NUMBA is set)")
        return kernels.numba_backend
    if name == "numpy":
        return kernels.numpy_backend
    raise ValueError(f"unknown backend {name!r}")


def _thread_info():
    try:
        import numba
    except ImportError:
        return 1, 1
    return numba.get_num_threads(), numba.config.NUMBA_NUM_THREADS


def determinism_check(grid: OccupancyMap, channels: int, dtype, steps: int = 5) -> bool | None:
    """Run ``steps`` updates with one thread and with all threads; compare
    bitwise. Returns None when only one thread is available."""
    if kernels.numba_backend is None:
        return None
    import numba

    max_threads = numba.config.NUMBA_NUM_THREADS
    if max_threads < 2:
        return None
    kern = _kernels(channels, grid.resolution)
    act = kernel_activation(grid, kern, dtype)
    results = []
    before = numba.get_num_threads()
    try:
        for t in (1, max_threads):
            numba.set_num_threads(t)
            b = init_uniform(grid, channels, dtype)
            b.values[:, : grid.height // 2] *= 0.5
            for d in motion_sequence(steps):
                b = step(b, d, grid, kern, act)
            results.append(b.values.copy())
    finally:
        numba.set_num_threads(before)
    return bool(np.array_equal(results[0], results[1]))


def run_bench(width: int, height: int, channels: int, steps: int = 1000, *,
              dtype: str = "float32", backend: str | None = None, observe: bool = True,
              budget: int = 512, seed: int = 0, check_determinism: bool = True) -> BenchReport:
    be = _backend(backend)
    dt = np.dtype(dtype)
    grid = bench_map(width, height, seed)
    kern = _kernels(channels, grid.resolution)
    act = kernel_activation(grid, kern, dt)
    belief = init_uniform(grid, channels, dt)
    scratch = np.empty_like(belief.values)
    spatial = kern.spatial.astype(dt)
    angular = kern.angular.astype(dt)
    free = grid.free
    threads, _ = _thread_info()
    report = BenchReport((width, height, channels), dtype, be.NAME, threads, steps,
                         {p: [] for p in PHASES})

    model = scan = None
    if observe:
        model = LikelihoodModel(grid)
        j, i = np.argwhere(grid.distance_field().values > 0.5)[0]
        x, y = grid.cell_center(i, j)
        scan = simulate_scan(grid, (float(x), float(y), 0.3), 180, 2 * math.pi, 8.0)

    deltas = motion_sequence(steps)
    # warm-up compiles every kernel outside the timed loop
    be.motion_pass(belief.values, free, channel_shifts(belief, deltas[0]), spatial, 0, scratch)
    be.angular_pass(scratch, angular, act.inverse, 0, belief.values)
    belief.values[:] = grid.free.astype(dt)

    for d in deltas:
        t0 = time.perf_counter()
        off = kernel_offset(belief.theta, channels)
        be.motion_pass(belief.values, free, channel_shifts(belief, d), spatial, off, scratch)
        t1 = time.perf_counter()
        peak = be.angular_pass(scratch, angular, act.inverse, off, belief.values)
        if 0 < peak < 1e-6:
            belief.values *= 1.0 / peak
        belief.theta += d.w
        t2 = time.perf_counter()
        report.samples["shift+mask+spatial"].append(t1 - t0)
        report.samples["angular+normalize"].append(t2 - t1)
        report.samples["step"].append(t2 - t0)
        if observe:
            t3 = time.perf_counter()
            samples = dither_samples(belief_map(belief), budget)
            observation_update(belief, samples, scan, grid, model=model, inplace=True)
            report.samples["observation"].append(time.perf_counter() - t3)

    if check_determinism and be is kernels.numba_backend:
        small = bench_map(min(width, 96), min(height, 96), seed)
        report.deterministic = determinism_check(small, min(channels, 32), dt)
    return report
