"""Command-line entry point: ``beliefgrid {localize,evaluate,bench,render}``.

Settings come from defaults, then an optional ``key = value`` config file,
then command-line flags (flags win). The resolved configuration is written
to ``config.txt`` in the output directory and can be replayed with
``--config``. Results go under ``$BELIEFGRID_RESULTS`` (default
``./results``) unless ``--out`` is given.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import warnings
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
RESULTS_ENV = "BELIEFGRID_RESULTS"
METHOD_CHOICES = ("blind", "sampled", "pf")
EXPERIMENTS = ("difficulty", "convergence", "longterm")


class ConfigError(Exception):
    """Bad configuration value or missing input file."""


@dataclass
class RunConfig:
    map: str = "office"                 # file path, or a built-in name
    resolution: float = 0.1             # metres per cell
    threshold: int = 250                # gray level at or above which a pixel is free
    channels: int = 128
    sigma_x: float = 0.03
    sigma_y: float = 0.03
    sigma_theta: float = 0.015
    sigma_hit: float = 0.2
    weight_floor: float = 0.05
    beam_stride: int = 4
    sample_budget: int = 512
    method: str = "sampled"
    seed: int = 0
    duration: float = 120.0             # simulated seconds
    obs_interval: float = 0.25
    alpha_trans: float = 0.02
    alpha_rot: float = 0.02
    alpha_cross: float = 0.005
    beam_count: int = 180
    max_range: float = 8.0
    range_noise: float = 0.01
    dtype: str = "float64"
    frame_interval: float = 10.0        # seconds between PNG frames, 0 disables
    out: str = ""                       # empty: $BELIEFGRID_RESULTS or ./results

    def validate(self) -> None:
        if self.method not in METHOD_CHOICES:
            raise ConfigError(f"method must be one of {METHOD_CHOICES}, got {self.method!r}")
        if self.channels < 4 or self.channels % 2:
            raise ConfigError("channels must be an even number >= 4")
        if self.channels & (self.channels - 1):
            warnings.warn(f"channels={self.channels} is not a power of two", stacklevel=2)
        for name in ("resolution", "sigma_x", "sigma_y", "sigma_theta", "sigma_hit",
                     "duration", "obs_interval", "max_range"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 < self.weight_floor < 1:
            raise ConfigError("weight_floor must lie in (0, 1)")
        if not 0 < self.threshold < 255:
            raise ConfigError("threshold must lie in (0, 255)")
        if min(self.beam_stride, self.sample_budget, self.beam_count) < 1:
            raise ConfigError("beam_stride, sample_budget and beam_count must be >= 1")
        if min(self.alpha_trans, self.alpha_rot, self.alpha_cross, self.range_noise,
               self.frame_interval) < 0:
            raise ConfigError("noise coefficients and frame_interval must be >= 0")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")

    def dump(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in asdict(self).items())


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_CASTS = {"float": float, "int": int, "str": str}


def _cast(key: str, value: str):
    kind = _FIELD_TYPES[key]
    try:
        return _CASTS[kind](value)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r} as {kind}") from None


def parse_config_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{source}:{n}: unknown key {key!r}")
        out[key] = _cast(key, value)
    return out


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        values.update(parse_config_text(path.read_text(), str(path)))
    for key in _FIELD_TYPES:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def results_root(cfg: RunConfig) -> Path:
    if cfg.out:
        return Path(cfg.out)
    return Path(os.environ.get(RESULTS_ENV, "results"))


def load_grid(cfg: RunConfig):
    from .floorplans import GENERATORS, builtin_path
    from .maps import MapError, read_map

    path = Path(cfg.map)
    if not path.is_file():
        name = path.stem if path.parent == Path(".") else None
        if name in GENERATORS:
            path = builtin_path(name)
        else:
            raise ConfigError(f"map file not found: {cfg.map}")
    try:
        grid = read_map(path, cfg.threshold, cfg.resolution)
    except MapError as exc:
        raise ConfigError(f"cannot read map {cfg.map}: {exc}") from None
    return grid, Path(cfg.map).stem


def episode_config(cfg: RunConfig):
    from .belief import MotionNoise
    from .evaluation import EpisodeConfig
    from .localizer import FilterConfig
    from .observation import LikelihoodParams
    from .simulator import OdometryNoiseModel, ScanConfig

    filt = FilterConfig(cfg.channels, MotionNoise(cfg.sigma_x, cfg.sigma_y, cfg.sigma_theta),
                        LikelihoodParams(cfg.sigma_hit, cfg.weight_floor, cfg.beam_stride),
                        cfg.sample_budget, cfg.dtype)
    return EpisodeConfig(duration=cfg.duration, obs_interval=cfg.obs_interval,
                         odom_noise=OdometryNoiseModel(cfg.alpha_trans, cfg.alpha_rot,
                                                       cfg.alpha_cross),
                         scan=ScanConfig(cfg.beam_count, 2 * math.pi, cfg.max_range,
                                         cfg.range_noise),
                         filter=filt)


def parse_seeds(text: str) -> list[int]:
    """``"0-19"``, ``"1,4,9"`` or a mix such as ``"0-3,10"``."""
    seeds = []
    try:
        for part in filter(None, (p.strip() for p in text.split(","))):
            lo, _, hi = part.partition("-")
            seeds.extend(range(int(lo), int(hi or lo) + 1))
    except ValueError:
        raise ConfigError(f"bad seed list {text!r}") from None
    return seeds


# -- commands ----------------------------------------------------------------------

def cmd_localize(args) -> int:
    from .evaluation import run_episode, plot_overlay
    from .formats import save_belief_png, write_snapshot
    from .localizer import Localizer
    from .simulator import write_trajectory

    cfg = resolve_config(args)
    grid, map_name = load_grid(cfg)
    out = results_root(cfg) / map_name / cfg.method
    out.mkdir(parents=True, exist_ok=True)
    (out / f"config_{cfg.seed}.txt").write_text(cfg.dump())

    ecfg = episode_config(cfg)
    frames = out / f"frames_{cfg.seed}"
    every = int(round(cfg.frame_interval / ecfg.dt)) if cfg.frame_interval > 0 else 0
    traj = []
    state = {"filt": None}

    def on_frame(tick, sim, filt):
        state["filt"] = filt
        if every and isinstance(filt, Localizer) and tick % every == 0:
            frames.mkdir(exist_ok=True)
            save_belief_png(filt.belief, frames / f"frame_{tick:06d}.png", occupied=grid.occupied)

    rec = run_episode(grid, cfg.method, cfg.seed, ecfg, frame_callback=on_frame, trajectory=traj)
    rec.to_csv(out / f"run_{cfg.seed}.csv")
    write_trajectory(out / f"trajectory_{cfg.seed}.csv", traj)
    plot_overlay(grid, [rec], out / f"overlay_{cfg.seed}.png", f"{map_name} / {cfg.method}")
    if isinstance(state["filt"], Localizer):
        write_snapshot(state["filt"].belief, out / f"belief_{cfg.seed}.bgt")

    conv = rec.converged_at
    step_ms = 1e3 * float(np.mean(rec.step_times)) if rec.step_times else float("nan")
    print(f"map={map_name} method={cfg.method} seed={cfg.seed} "
          f"converged={'yes' if conv else 'no'}"
          + (f" converged_time={conv[0]:.2f}s converged_distance={conv[1]:.2f}m" if conv else "")
          + f" final_xy_error={rec.column('xy_error')[-1]:.3f}m"
          f" final_theta_error={rec.column('theta_error_deg')[-1]:.2f}deg"
          f" mean_step_ms={step_ms:.2f} out={out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .evaluation import (DifficultyConfig, convergence_experiment, long_term_experiment,
                             map_difficulty, plot_overlay, write_convergence_summary,
                             write_difficulty_summary, write_long_term_summary)
    from .simulator import ScanConfig

    cfg = resolve_config(args)
    grid, map_name = load_grid(cfg)
    root = results_root(cfg) / map_name
    exp_dir = root / args.experiment
    exp_dir.mkdir(parents=True, exist_ok=True)
    (exp_dir / "config.txt").write_text(cfg.dump())
    methods = args.methods.split(",") if args.methods else [cfg.method]
    for m in methods:
        if m not in METHOD_CHOICES:
            raise ConfigError(f"unknown method {m!r}")

    if args.experiment == "difficulty":
        dcfg = DifficultyConfig(args.threshold_m, ScanConfig(cfg.beam_count, 2 * math.pi,
                                                             cfg.max_range, 0.0),
                                args.stride, args.test_headings)
        res = map_difficulty(grid, None, dcfg)
        write_difficulty_summary(exp_dir / "summary.csv", map_name, res, dcfg)
        print(f"map={map_name} difficulty={res.fraction:.4f} "
              f"wrong={int(res.wrong.sum())}/{len(res.cells)} stride={args.stride}")
        return EXIT_OK

    seeds = parse_seeds(args.seeds) if args.seeds is not None else list(range(args.runs))
    if not seeds:
        raise ConfigError("need at least one seed (use --seeds or --runs)")
    ecfg = episode_config(cfg)

    if args.experiment == "convergence":
        summaries = []
        for m in methods:
            s = convergence_experiment(grid, m, seeds, args.max_distance, ecfg, out_dir=root)
            summaries.append(s)
            st = s.stats()
            print(f"map={map_name} method={m} runs={s.runs} converged={st['converged']} "
                  f"median_m={st['median']:.2f} min_m={st['min']:.2f} max_m={st['max']:.2f}")
        write_convergence_summary(exp_dir / "summary.csv", map_name, summaries)
        return EXIT_OK

    table, records = long_term_experiment(grid, methods, cfg.duration, seeds, ecfg, out_dir=root)
    write_long_term_summary(exp_dir / "summary.csv", map_name, table, cfg.duration, len(seeds))
    for m in methods:
        plot_overlay(grid, [records[(m, seeds[0])]], root / m / f"overlay_{seeds[0]}.png",
                     f"{map_name} / {m}")
        cells = " ".join(f"{xy:.3f}m/{th:.2f}deg" for xy, th in table[m])
        print(f"map={map_name} method={m} intervals: {cells}")
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import run_bench

    if args.steps < 1:
        raise ConfigError("steps must be >= 1")
    try:
        w, h, n = (int(v) for v in args.size.lower().split("x"))
    except ValueError:
        raise ConfigError(f"size must look like WxHxC, got {args.size!r}") from None
    report = run_bench(w, h, n, args.steps, dtype=args.dtype, backend=args.backend,
                       observe=not args.no_observation, budget=args.sample_budget)
    print(report.format())
    return EXIT_OK if report.deterministic in (True, None) else EXIT_RUNTIME


def cmd_render(args) -> int:
    from .formats import read_snapshot, save_belief_png

    occ = None
    if args.map:
        grid, _ = load_grid(RunConfig(map=args.map))
        occ = grid.occupied
    out = Path(args.out) if args.out else None
    for snap in args.snapshots:
        p = Path(snap)
        if not p.is_file():
            raise ConfigError(f"snapshot not found: {p}")
        belief = read_snapshot(p)
        if occ is not None and occ.shape != (belief.height, belief.width):
            raise ConfigError(f"map shape {occ.shape} does not match snapshot {p}")
        dest = (out or p.parent) / (p.stem + ".png")
        dest.parent.mkdir(parents=True, exist_ok=True)
        save_belief_png(belief, dest, occupied=occ, color=not args.gray)
        print(dest)
    return EXIT_OK


# -- parser ----------------------------------------------------------------------

def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file; flags override it")
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        kind = _CASTS[f.type]
        kw = {"type": kind, "default": None, "help": f"default {f.default!r}"}
        if f.name == "method":
            kw["choices"] = METHOD_CHOICES
        p.add_argument(flag, dest=f.name, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="beliefgrid", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("localize", help="simulate one run and filter it")
    _add_run_flags(p)
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("evaluate", help="run an experiment family")
    p.add_argument("experiment", choices=EXPERIMENTS)
    _add_run_flags(p)
    p.add_argument("--methods", help="comma-separated methods (default: --method)")
    p.add_argument("--seeds", help="e.g. 0-19 or 1,2,5")
    p.add_argument("--runs", type=int, default=20, help="seeds 0..runs-1 when --seeds is absent")
    p.add_argument("--max-distance", type=float, default=200.0, dest="max_distance")
    p.add_argument("--stride", type=int, default=3, help="difficulty: cell stride")
    p.add_argument("--test-headings", type=int, default=8, dest="test_headings")
    p.add_argument("--threshold-m", type=float, default=1.0, dest="threshold_m",
                   help="difficulty: error threshold C in metres")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="time the filter phases on a synthetic map")
    p.add_argument("--size", default="512x512x128", help="W x H x channels")
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--dtype", choices=("float32", "float64"), default="float32")
    p.add_argument("--backend", choices=("numba", "numpy"), default=None)
    p.add_argument("--sample-budget", type=int, default=512, dest="sample_budget")
    p.add_argument("--no-observation", action="store_true", dest="no_observation")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("render", help="re-render PNG heatmaps from belief snapshots")
    p.add_argument("snapshots", nargs="+")
    p.add_argument("--map", help="draw this map's obstacles in white")
    p.add_argument("--out", help="output directory (default: next to each snapshot)")
    p.add_argument("--gray", action="store_true", help="8-bit grayscale instead of colour")
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"beliefgrid: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, RuntimeError, ValueError) as exc:
        print(f"beliefgrid: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
