"""Particle-filter baseline: best-scan initialisation and local MCL tracking.

The baseline shares the likelihood model and the per-step motion noise with
the dense filter so the comparison isolates the state representation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .belief import MotionNoise, OdometryDelta, wrap_angle
from .maps import DistanceField, OccupancyMap
from .observation import LidarScan, LikelihoodModel, LikelihoodParams

DEFAULT_COUNT = 75
INIT_HEADINGS = 32
RECOVERY_INFLATION = 5.0


@dataclass
class ParticleSet:
    poses: np.ndarray     # (N, 3) world x, y, theta
    weights: np.ndarray   # (N,), sums to 1
    recoveries: int = 0

    def __len__(self):
        return self.poses.shape[0]

    def __post_init__(self):
        self.poses = np.atleast_2d(np.asarray(self.poses, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float)
        if self.poses.shape != (self.weights.size, 3):
            raise ValueError("poses must be (N, 3) with one weight per particle")


def _model(grid, field, params, model):
    return model if model is not None else LikelihoodModel(grid, field, params)


def best_pose(grid: OccupancyMap, field: DistanceField | None, scan: LidarScan,
              params: LikelihoodParams | None = None, stride: int = 1,
              headings: int = INIT_HEADINGS, *, model: LikelihoodModel | None = None):
    """Highest-likelihood pose over every ``stride``-th free cell centre and
    ``headings`` evenly spaced angles. Ties go to the lowest (k, j, i)."""
    model = _model(grid, field, params, model)
    cells = grid.free_cells()
    if stride > 1:
        cells = cells[(cells[:, 0] % stride == 0) & (cells[:, 1] % stride == 0)]
    angles = 2 * math.pi * np.arange(headings) / headings
    scores = model.loglik_cells(cells, angles, scan)          # (N, headings)
    k, n = np.unravel_index(int(np.argmax(scores.T)), (headings, cells.shape[0]))
    x, y = grid.cell_center(cells[n, 0], cells[n, 1])
    return (float(x), float(y), float(wrap_angle(angles[k])))


def particles_around(pose, count: int, noise: MotionNoise, rng: np.random.Generator,
                     grid: OccupancyMap | None = None) -> ParticleSet:
    """``count`` equally weighted particles: the first exactly at ``pose``,
    the rest Gaussian perturbations of it (kept in free space if a map is
    given, falling back to ``pose`` itself)."""
    poses = np.tile(np.asarray(pose, dtype=float), (count, 1))
    if count > 1:
        d = rng.standard_normal((count - 1, 3)) * [noise.sigma_x, noise.sigma_y, noise.sigma_theta]
        poses[1:] += d
        poses[:, 2] = wrap_angle(poses[:, 2])
        if grid is not None:
            bad = ~_free(grid, poses)
            poses[bad] = pose
    return ParticleSet(poses, np.full(count, 1.0 / count))


def pf_init(grid: OccupancyMap, field: DistanceField | None, scan0: LidarScan,
            params: LikelihoodParams | None = None, count: int = DEFAULT_COUNT,
            rng: np.random.Generator | None = None, noise: MotionNoise | None = None,
            stride: int = 1, headings: int = INIT_HEADINGS, *,
            model: LikelihoodModel | None = None) -> ParticleSet:
    """Seed the filter around the pose that best explains the first scan."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    pose = best_pose(grid, field, scan0, params, stride, headings, model=model)
    return particles_around(pose, count, noise or MotionNoise(), rng, grid)


def _free(grid: OccupancyMap, poses: np.ndarray) -> np.ndarray:
    i, j = grid.cell_of(poses[:, 0], poses[:, 1])
    ok = (i >= 0) & (j >= 0) & (i < grid.width) & (j < grid.height)
    ok[ok] = ~grid.occupied[j[ok], i[ok]]
    return ok


def propagate(poses: np.ndarray, u: OdometryDelta, noise: MotionNoise,
              rng: np.random.Generator, inflate: float = 1.0) -> np.ndarray:
    """Apply a body-frame delta plus body-frame Gaussian noise to each pose."""
    n = poses.shape[0]
    eps = rng.standard_normal((n, 3)) * inflate
    du = u.u + noise.sigma_x * eps[:, 0]
    dv = u.v + noise.sigma_y * eps[:, 1]
    c, s = np.cos(poses[:, 2]), np.sin(poses[:, 2])
    out = np.empty_like(poses)
    out[:, 0] = poses[:, 0] + c * du - s * dv
    out[:, 1] = poses[:, 1] + s * du + c * dv
    out[:, 2] = wrap_angle(poses[:, 2] + u.w + noise.sigma_theta * eps[:, 2])
    return out


def effective_sample_size(weights: np.ndarray) -> float:
    return float(1.0 / np.sum(weights ** 2))


def systematic_resample(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Low-variance resampling; returns the chosen indices."""
    n = weights.size
    pos = (rng.random() + np.arange(n)) / n
    cum = np.cumsum(weights)
    cum[-1] = 1.0
    return np.searchsorted(cum, pos, side="right")


def pf_step(P: ParticleSet, u: OdometryDelta, scan: LidarScan | None, grid: OccupancyMap,
            field: DistanceField | None, noise: MotionNoise, rng: np.random.Generator,
            params: LikelihoodParams | None = None, *,
            model: LikelihoodModel | None = None) -> ParticleSet:
    """Predict with ``u``; if a scan is given, weight and maybe resample.

    Particles that end up in occupied cells get weight 0. If every weight is
    zero the set is re-drawn around the previous weighted mean with inflated
    noise and ``recoveries`` is incremented.
    """
    poses = propagate(P.poses, u, noise, rng)
    return reweight(P, poses, u, scan, grid, noise, rng, _model(grid, field, params, model))


def reweight(P: ParticleSet, poses: np.ndarray, u: OdometryDelta, scan: LidarScan | None,
             grid: OccupancyMap, noise: MotionNoise, rng: np.random.Generator,
             model: LikelihoodModel) -> ParticleSet:
    """Weight already-propagated ``poses`` (map constraint and optional scan),
    resample on low ESS, and recover if nothing survives."""
    n = len(P)
    w = P.weights * _free(grid, poses)
    if scan is not None:
        w = w * np.exp(model.loglik_poses(poses, scan))
    total = w.sum()
    if not total > 0:
        mean = np.asarray(estimate(P))
        poses = propagate(np.tile(mean, (n, 1)), u, noise, rng, inflate=RECOVERY_INFLATION)
        ok = _free(grid, poses)
        if not ok.any():
            # keep the old particles rather than inventing free space
            poses, ok = P.poses.copy(), np.ones(n, dtype=bool)
        return ParticleSet(poses, ok / ok.sum(), P.recoveries + 1)
    w = w / total
    if scan is not None and effective_sample_size(w) < n / 2:
        idx = systematic_resample(w, rng)
        poses = poses[idx]
        w = np.full(n, 1.0 / n)
    return ParticleSet(poses, w, P.recoveries)


def estimate(P: ParticleSet) -> tuple[float, float, float]:
    """Weighted mean position and circular mean heading."""
    w = P.weights / P.weights.sum()
    x = float(w @ P.poses[:, 0])
    y = float(w @ P.poses[:, 1])
    th = math.atan2(float(w @ np.sin(P.poses[:, 2])), float(w @ np.cos(P.poses[:, 2])))
    return (x, y, float(wrap_angle(th)))


class ParticleTracker:
    """Same driving interface as the dense localizer: odometry accumulates
    until one cell or half a channel of motion, then the particles move."""

    def __init__(self, grid: OccupancyMap, scan0: LidarScan, *, count: int = DEFAULT_COUNT,
                 noise: MotionNoise | None = None, params: LikelihoodParams | None = None,
                 channels: int = 128, rng: np.random.Generator | None = None,
                 init_pose=None, init_stride: int = 1):
        self.grid = grid
        self.noise = noise or MotionNoise()
        self.model = LikelihoodModel(grid, grid.distance_field(), params)
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.delta_theta = 2 * math.pi / channels
        if init_pose is None:
            self.particles = pf_init(grid, None, scan0, count=count, rng=self.rng,
                                     noise=self.noise, stride=init_stride, model=self.model)
        else:
            self.particles = particles_around(init_pose, count, self.noise, self.rng, grid)
        self.pending = OdometryDelta()

    def predict(self, delta: OdometryDelta) -> bool:
        self.pending = self.pending.compose(delta)
        p = self.pending
        if p.translation < self.grid.resolution and abs(p.w) < self.delta_theta / 2:
            return False
        self.particles = pf_step(self.particles, p, None, self.grid, None, self.noise, self.rng,
                                 model=self.model)
        self.pending = OdometryDelta()
        return True

    def update(self, scan: LidarScan) -> None:
        P = self.particles
        self.particles = reweight(P, P.poses, OdometryDelta(), scan, self.grid, self.noise,
                                  self.rng, self.model)

    def estimate(self) -> tuple[float, float, float]:
        x, y, th = estimate(self.particles)
        p = self.pending
        c, s = math.cos(th), math.sin(th)
        return (x + c * p.u - s * p.v, y + s * p.u + c * p.v, float(wrap_angle(th + p.w)))

