"""Experiment harness: seeded episodes, convergence distance, long-term error
and single-scan map difficulty."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .baseline_pf import ParticleTracker
from .belief import wrap_angle
from .localizer import FilterConfig, Localizer
from .maps import DistanceField, OccupancyMap, raycast_many
from .observation import LidarScan, LikelihoodModel, LikelihoodParams
from .simulator import (DT, OdometryNoiseModel, RandomWalkPolicy, RobotState, ScanConfig,
                        Simulation, simulate_scan, random_free_pose)

METHODS = ("blind", "sampled", "pf")
CONVERGED_XY = 0.10
CONVERGED_HOLD = 60.0
LONG_TERM_EDGES = (0.0, 60.0, 300.0)

RECORD_FIELDS = ["t", "x", "y", "theta", "est_x", "est_y", "est_theta",
                 "xy_error", "theta_error_deg", "distance"]


@dataclass(frozen=True)
class EpisodeConfig:
    dt: float = DT
    duration: float = 600.0
    max_distance: float = math.inf
    obs_interval: float = 0.25
    record_every: int = 5
    odom_noise: OdometryNoiseModel = OdometryNoiseModel()
    scan: ScanConfig = ScanConfig()
    filter: FilterConfig = FilterConfig()
    pf_count: int = 75
    start_margin: float = 0.3
    stop_when_converged: bool = False
    stop_at_time: float = math.inf


def pose_error(truth, est) -> tuple[float, float]:
    """(planar distance in metres, wrapped heading error in degrees)."""
    xy = math.hypot(est[0] - truth[0], est[1] - truth[1])
    th = abs(float(wrap_angle(est[2] - truth[2])))
    return xy, math.degrees(th)


@dataclass
class ExperimentRecord:
    method: str
    seed: int
    rows: np.ndarray                        # (n, len(RECORD_FIELDS))
    step_times: list = field(default_factory=list)
    obs_times: list = field(default_factory=list)
    converged_at: tuple | None = None        # (time, distance) or None

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, RECORD_FIELDS.index(name)]

    def to_csv(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(RECORD_FIELDS + ["method", "seed"])
            for r in self.rows:
                w.writerow([f"{v:.6f}" for v in r] + [self.method, self.seed])

    @classmethod
    def from_csv(cls, path) -> ExperimentRecord:
        with open(path, newline="") as fh:
            rd = csv.reader(fh)
            header = next(rd)
            if header[:len(RECORD_FIELDS)] != RECORD_FIELDS:
                raise ValueError(f"{path}: not an experiment record")
            rows, method, seed = [], "", 0
            for r in rd:
                rows.append([float(v) for v in r[:len(RECORD_FIELDS)]])
                method, seed = r[-2], int(r[-1])
        rec = cls(method, seed, np.array(rows).reshape(-1, len(RECORD_FIELDS)))
        rec.converged_at = convergence_point(rec)
        return rec


class ConvergenceTracker:
    """Online detector: converged once the error has stayed below
    ``threshold`` for ``hold`` seconds; any spike restarts the window."""

    def __init__(self, threshold: float = CONVERGED_XY, hold: float = CONVERGED_HOLD):
        self.threshold = threshold
        self.hold = hold
        self._start = None
        self.result = None   # (time, distance) at the start of the held window

    def add(self, t: float, err: float, dist: float) -> bool:
        if self.result is not None:
            return True
        if err >= self.threshold:
            self._start = None
            return False
        if self._start is None:
            self._start = (t, dist)
        if t - self._start[0] >= self.hold:
            self.result = self._start
        return self.result is not None


def convergence_point(record: ExperimentRecord, threshold: float = CONVERGED_XY,
                      hold: float = CONVERGED_HOLD):
    tr = ConvergenceTracker(threshold, hold)
    for t, e, d in zip(record.column("t"), record.column("xy_error"), record.column("distance")):
        if tr.add(float(t), float(e), float(d)):
            break
    return tr.result


def make_filter(method: str, grid: OccupancyMap, sim: Simulation, cfg: EpisodeConfig,
                rng: np.random.Generator, init_pose=None):
    if method in ("blind", "sampled"):
        return Localizer(grid, cfg.filter)
    if method == "pf":
        return ParticleTracker(grid, sim.scan(), count=cfg.pf_count, noise=cfg.filter.noise,
                               params=cfg.filter.likelihood, channels=cfg.filter.channels,
                               rng=rng, init_pose=init_pose)
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")


def _estimate(filt) -> tuple[float, float, float]:
    est = filt.estimate()
    if isinstance(est, tuple):
        return est
    return (est.x, est.y, est.theta)


def run_episode(grid: OccupancyMap, method: str, seed: int, cfg: EpisodeConfig | None = None,
                *, start_pose=None, policy=None, pf_init_pose=None,
                frame_callback=None, trajectory: list | None = None) -> ExperimentRecord:
    """Simulate one seeded run and filter it with ``method``.

    The robot starts at ``start_pose`` or a random free pose. Scans (for
    ``sampled`` and ``pf``) are applied right after a filter step whenever
    ``obs_interval`` seconds have passed since the previous one. If
    ``trajectory`` is a list, one ``(t, x, y, theta, odom_u, odom_v, odom_w)``
    row per tick is appended to it.
    """
    cfg = cfg or EpisodeConfig()
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    # separate streams keep the trajectory identical across methods
    sim_rng, filt_rng, scan_rng = (np.random.default_rng(s)
                                   for s in np.random.SeedSequence(seed).spawn(3))
    pose = start_pose if start_pose is not None else random_free_pose(grid, sim_rng, cfg.start_margin)
    sim = Simulation(grid, RobotState(*pose), policy or RandomWalkPolicy(), sim_rng,
                     cfg.odom_noise, cfg.scan, cfg.dt, scan_rng)
    filt = make_filter(method, grid, sim, cfg, filt_rng, pf_init_pose)
    observe = method != "blind"
    if method == "sampled":
        filt.update(sim.scan())
    last_obs = 0.0
    if trajectory is not None:
        trajectory.append((0.0, *sim.state.pose, 0.0, 0.0, 0.0))

    tracker = ConvergenceTracker()
    rows = []
    end = min(cfg.duration, cfg.stop_at_time)
    if math.isinf(end) and math.isinf(cfg.max_distance):
        raise ValueError("episode needs a finite duration or max_distance")
    n_ticks = math.inf if math.isinf(end) else int(round(end / cfg.dt))
    tick = -1
    while tick < n_ticks:
        tick += 1
        if tick > 0:
            _, meas = sim.advance()
            stepped = filt.predict(meas)
            t = sim.state.time
            if trajectory is not None:
                trajectory.append((t, *sim.state.pose, meas.u, meas.v, meas.w))
            if observe and stepped and t - last_obs >= cfg.obs_interval - 1e-9:
                filt.update(sim.scan())
                last_obs = t
        if tick % cfg.record_every:
            continue
        st = sim.state
        est = _estimate(filt)
        xy, th = pose_error(st.pose, est)
        rows.append((st.time, st.x, st.y, st.theta, est[0], est[1], est[2], xy, th, st.distance))
        if frame_callback is not None:
            frame_callback(tick, sim, filt)
        done = tracker.add(st.time, xy, st.distance)
        if (cfg.stop_when_converged and done) or st.distance >= cfg.max_distance:
            break

    rec = ExperimentRecord(method, seed, np.array(rows))
    if isinstance(filt, Localizer):
        rec.step_times = filt.times.motion
        rec.obs_times = filt.times.observation
    rec.converged_at = tracker.result
    return rec


# -- convergence -------------------------------------------------------------

@dataclass
class ConvergenceSummary:
    method: str
    distances: dict       # seed -> metres, converged runs only
    times: dict           # seed -> seconds
    unconverged: list     # seeds

    @property
    def runs(self) -> int:
        return len(self.distances) + len(self.unconverged)

    def stats(self) -> dict:
        d = np.array(sorted(self.distances.values()))
        if d.size == 0:
            return {"min": math.nan, "median": math.nan, "max": math.nan,
                    "converged": 0, "unconverged": len(self.unconverged)}
        # unconverged runs count as infinitely far for the median
        full = np.concatenate([d, np.full(len(self.unconverged), np.inf)])
        return {"min": float(d[0]), "median": float(np.median(full)), "max": float(d[-1]),
                "converged": int(d.size), "unconverged": len(self.unconverged)}


def convergence_experiment(grid: OccupancyMap, method: str, seeds, max_distance: float,
                           cfg: EpisodeConfig | None = None, out_dir=None) -> ConvergenceSummary:
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    if not max_distance > 0 or math.isinf(max_distance):
        raise ValueError("max_distance must be positive and finite")
    cfg = replace(cfg or EpisodeConfig(), max_distance=max_distance, duration=math.inf,
                  stop_when_converged=True)
    summary = ConvergenceSummary(method, {}, {}, [])
    for s in seeds:
        rec = run_episode(grid, method, s, cfg)
        if out_dir is not None:
            rec.to_csv(Path(out_dir) / method / f"run_{s}.csv")
        if rec.converged_at is None:
            summary.unconverged.append(s)
        else:
            summary.times[s], summary.distances[s] = rec.converged_at
    return summary


# -- long-term error ---------------------------------------------------------

def interval_means(record: ExperimentRecord, duration: float, edges=LONG_TERM_EDGES):
    """Mean (xy m, theta deg) per interval [e0, e1), ..., [e_last, duration)."""
    bounds = list(edges) + [duration]
    t = record.column("t")
    out = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        m = (t >= lo) & (t < hi)
        if not m.any():
            out.append((math.nan, math.nan))
        else:
            out.append((float(record.column("xy_error")[m].mean()),
                        float(record.column("theta_error_deg")[m].mean())))
    return out


def long_term_experiment(grid: OccupancyMap, methods, duration: float, seeds,
                         cfg: EpisodeConfig | None = None, out_dir=None):
    """Per method, the interval means averaged over seeds. Returns
    ``{method: [(xy, theta_deg), ...]}`` and the per-run records."""
    if duration <= LONG_TERM_EDGES[-1]:
        raise ValueError(f"duration must exceed {LONG_TERM_EDGES[-1]} s")
    cfg = replace(cfg or EpisodeConfig(), duration=duration, max_distance=math.inf,
                  stop_when_converged=False)
    table, records = {}, {}
    for method in methods:
        per_run = []
        for s in seeds:
            rec = run_episode(grid, method, s, cfg)
            records[(method, s)] = rec
            if out_dir is not None:
                rec.to_csv(Path(out_dir) / method / f"run_{s}.csv")
            per_run.append(interval_means(rec, duration))
        table[method] = [tuple(np.nanmean(np.array(per_run)[:, k, :], axis=0))
                         for k in range(len(LONG_TERM_EDGES))]
    return table, records


def interval_labels(duration: float, edges=LONG_TERM_EDGES):
    bounds = list(edges) + [duration]
    return [f"[{lo:g},{hi:g})" for lo, hi in zip(bounds[:-1], bounds[1:])]


# -- map difficulty -------------------------------------------------------------

@dataclass(frozen=True)
class DifficultyConfig:
    error_threshold: float = 1.0
    scan: ScanConfig = ScanConfig(range_noise=0.0)
    stride: int = 3
    test_headings: int = 8
    likelihood: LikelihoodParams = LikelihoodParams()

    def __post_init__(self):
        if not self.error_threshold > 0:
            raise ValueError("error_threshold must be positive")
        if self.stride < 1 or self.test_headings < 1:
            raise ValueError("stride and test_headings must be >= 1")


@dataclass
class DifficultyResult:
    fraction: float
    cells: np.ndarray      # (N, 2) evaluated cells (i, j)
    errors: np.ndarray     # distance (m) from each cell to its best match
    wrong: np.ndarray      # bool per cell


def strided_cells(grid: OccupancyMap, stride: int) -> np.ndarray:
    cells = grid.free_cells()
    keep = (cells[:, 0] % stride == stride // 2) & (cells[:, 1] % stride == stride // 2)
    return cells[keep]


def map_difficulty(grid: OccupancyMap, field: DistanceField | None = None,
                   cfg: DifficultyConfig | None = None, *, beam_angles=None) -> DifficultyResult:
    """Fraction of free cells a single noise-free scan fails to localize.

    Each evaluated cell synthesises a scan from its centre at heading 0 and
    scores every candidate (evaluated cell x test heading). Candidates are
    ranked by likelihood, ties broken by the lowest (heading, row, column)
    index. A cell counts as wrong when a candidate more than
    ``error_threshold`` away ranks above its own pose. ``errors`` holds the
    distance to the top-ranked candidate.
    """
    cfg = cfg or DifficultyConfig()
    model = LikelihoodModel(grid, field, cfg.likelihood)
    cells = strided_cells(grid, cfg.stride)
    n = cells.shape[0]
    nt = cfg.test_headings
    headings = 2 * math.pi * np.arange(nt) / nt
    xs, ys = grid.cell_center(cells[:, 0], cells[:, 1])
    pos = np.stack([xs, ys], axis=1)
    flat_index = np.arange(nt * n).reshape(nt, n)     # (k, cell) rank order
    errors = np.empty(n)
    wrong = np.zeros(n, dtype=bool)
    for q in range(n):
        pose = (float(xs[q]), float(ys[q]), 0.0)
        if beam_angles is None:
            scan = simulate_scan(grid, pose, cfg.scan.beam_count, cfg.scan.fov,
                                 cfg.scan.max_range, 0.0)
        else:
            r = raycast_many(grid, pose[0], pose[1], np.asarray(beam_angles), cfg.scan.max_range)
            scan = LidarScan(np.asarray(beam_angles), r, cfg.scan.max_range)
        scores = model.loglik_cells(cells, headings, scan).T          # (nt, n)
        own = scores[0, q]
        beats = (scores > own) | ((scores == own) & (flat_index < flat_index[0, q]))
        far = np.hypot(*(pos - pos[q]).T) > cfg.error_threshold
        wrong[q] = bool((beats & far[None, :]).any())
        best = int(np.argmax(scores))
        errors[q] = float(np.hypot(*(pos[best % n] - pos[q])))
    frac = float(wrong.mean()) if n else 0.0
    return DifficultyResult(frac, cells, errors, wrong)


# -- output ------------------------------------------------------------------

def write_convergence_summary(path, map_name: str, summaries) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["map", "method", "runs", "converged", "unconverged",
                    "min_m", "median_m", "max_m"])
        for s in summaries:
            st = s.stats()
            w.writerow([map_name, s.method, s.runs, st["converged"], st["unconverged"],
                        f"{st['min']:.3f}", f"{st['median']:.3f}", f"{st['max']:.3f}"])


def write_long_term_summary(path, map_name: str, table: dict, duration: float, runs: int) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    labels = interval_labels(duration)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["map", "method", "interval_s", "xy_error_m", "theta_error_deg", "runs"])
        for method, vals in table.items():
            for lab, (xy, th) in zip(labels, vals):
                w.writerow([map_name, method, lab, f"{xy:.4f}", f"{th:.4f}", runs])


def write_difficulty_summary(path, map_name: str, result: DifficultyResult,
                             cfg: DifficultyConfig) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["map", "cells_evaluated", "stride", "threshold_m", "wrong", "difficulty"])
        w.writerow([map_name, len(result.cells), cfg.stride, cfg.error_threshold,
                    int(result.wrong.sum()), f"{result.fraction:.4f}"])


def plot_overlay(grid: OccupancyMap, records, path, title: str = "") -> None:
    """Ground-truth vs estimated trajectories over the map."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ext = (grid.origin[0], grid.origin[0] + grid.width * grid.resolution,
           grid.origin[1] + grid.height * grid.resolution, grid.origin[1])
    fig, ax = plt.subplots(figsize=(6, 6 * grid.height / grid.width + 0.5))
    ax.imshow(grid.occupied, cmap="gray_r", extent=ext, interpolation="nearest")
    colors = plt.get_cmap("tab10")
    for n, rec in enumerate(records):
        c = colors(n % 10)
        ax.plot(rec.column("x"), rec.column("y"), "-", color=c, lw=1.2,
                label=f"{rec.method} truth" if n == 0 else None)
        ax.plot(rec.column("est_x"), rec.column("est_y"), ":", color=c, lw=1.0,
                label=f"{rec.method} estimate" if n == 0 else None)
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    if title:
        ax.set_title(title)
    ax.legend(loc="upper right", fontsize=7)
    fig.tight_layout()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100)
    plt.close(fig)


def timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0
