"""Stateful filter driver: accumulates odometry, fires belief steps, applies
sampled scan updates and reports pose estimates."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .belief import (BeliefExtinguishedError, MotionNoise, OdometryDelta, PoseEstimate,
                     belief_map, build_kernels, init_uniform, kernel_activation,
                     refined_estimate, step, wrap_angle)
from .maps import OccupancyMap
from .observation import (LidarScan, LikelihoodModel, LikelihoodParams, SampleSet,
                          dither_samples, observation_update)


@dataclass(frozen=True)
class FilterConfig:
    channels: int = 128
    noise: MotionNoise = MotionNoise()
    likelihood: LikelihoodParams = LikelihoodParams()
    sample_budget: int = 512
    dtype: str = "float64"

    def __post_init__(self):
        if self.channels < 4 or self.channels % 2:
            raise ValueError("channels must be an even number >= 4")
        if self.sample_budget < 1:
            raise ValueError("sample_budget must be >= 1")
        np.dtype(self.dtype)


@dataclass
class PhaseTimes:
    motion: list = field(default_factory=list)
    observation: list = field(default_factory=list)


class Localizer:
    """Dense belief filter bound to one map.

    Odometry is accumulated in the body frame and a belief step runs once the
    pending translation reaches one cell or the pending rotation reaches half
    a channel. Estimates always include the pending motion.
    """

    def __init__(self, grid: OccupancyMap, config: FilterConfig | None = None):
        self.grid = grid
        self.config = config or FilterConfig()
        dtype = np.dtype(self.config.dtype)
        self.kernels = build_kernels(self.config.noise, self.config.channels, grid.resolution)
        self.activation = kernel_activation(grid, self.kernels, dtype)
        self.model = LikelihoodModel(grid, grid.distance_field(), self.config.likelihood)
        self.belief = init_uniform(grid, self.config.channels, dtype)
        self._scratch = np.empty_like(self.belief.values)
        self.pending = OdometryDelta()
        self.steps = 0
        self.updates = 0
        self.resets = 0
        self.times = PhaseTimes()

    @property
    def delta_theta(self) -> float:
        return 2 * math.pi / self.config.channels

    def reset(self) -> None:
        self.belief = init_uniform(self.grid, self.config.channels, self._scratch.dtype)
        self.pending = OdometryDelta()
        self.resets += 1

    def _due(self) -> bool:
        p = self.pending
        return (p.translation >= self.grid.resolution
                or abs(p.w) >= self.delta_theta / 2)

    def predict(self, delta: OdometryDelta) -> bool:
        """Add an odometry reading; returns True if a belief step ran."""
        self.pending = self.pending.compose(delta)
        if not self._due():
            return False
        self.flush()
        return True

    def flush(self) -> None:
        """Apply all pending motion now."""
        t0 = time.perf_counter()
        try:
            step(self.belief, self.pending, self.grid, self.kernels, self.activation,
                 scratch=self._scratch, inplace=True)
        except BeliefExtinguishedError:
            # nothing survived: fall back to global uncertainty
            self.reset()
        self.pending = OdometryDelta()
        self.steps += 1
        self.times.motion.append(time.perf_counter() - t0)

    def update(self, scan: LidarScan) -> SampleSet:
        """Dither samples from the belief map and apply the scan to them."""
        t0 = time.perf_counter()
        samples = dither_samples(belief_map(self.belief), self.config.sample_budget)
        observation_update(self.belief, samples, scan, self.grid, model=self.model, inplace=True)
        self.updates += 1
        self.times.observation.append(time.perf_counter() - t0)
        return samples

    def estimate(self) -> PoseEstimate:
        est = refined_estimate(self.belief)
        p = self.pending
        c, s = math.cos(est.theta), math.sin(est.theta)
        return PoseEstimate(est.x + c * p.u - s * p.v, est.y + s * p.u + c * p.v,
                            float(wrap_angle(est.theta + p.w)), est.confidence, est.cell)
