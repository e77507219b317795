"""Kinematic ground-truth generator: unicycle robot, noisy odometry, LIDAR."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .belief import OdometryDelta, wrap_angle
from .maps import InvalidOriginError, OccupancyMap, raycast, raycast_many
from .observation import LidarScan

DT = 0.05
NOMINAL_SPEED = 0.5


@dataclass(frozen=True)
class RobotState:
    x: float
    y: float
    theta: float
    time: float = 0.0
    distance: float = 0.0

    @property
    def pose(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.theta)


@dataclass(frozen=True)
class OdometryNoiseModel:
    alpha_trans: float = 0.02   # std per metre travelled
    alpha_rot: float = 0.02     # std per radian turned
    alpha_cross: float = 0.005  # heading std per metre travelled

    def __post_init__(self):
        if min(self.alpha_trans, self.alpha_rot, self.alpha_cross) < 0:
            raise ValueError("odometry noise coefficients must be >= 0")


@dataclass(frozen=True)
class ScanConfig:
    beam_count: int = 180
    fov: float = 2 * math.pi
    max_range: float = 8.0
    range_noise: float = 0.01


def relative_delta(p0, p1) -> OdometryDelta:
    """Body-frame motion taking pose ``p0`` to ``p1``."""
    dx, dy = p1[0] - p0[0], p1[1] - p0[1]
    c, s = math.cos(p0[2]), math.sin(p0[2])
    return OdometryDelta(c * dx + s * dy, -s * dx + c * dy, float(wrap_angle(p1[2] - p0[2])))


def compose_pose(pose, delta: OdometryDelta):
    c, s = math.cos(pose[2]), math.sin(pose[2])
    return (pose[0] + c * delta.u - s * delta.v,
            pose[1] + s * delta.u + c * delta.v,
            float(wrap_angle(pose[2] + delta.w)))


def step_robot(state: RobotState, command, dt: float, grid: OccupancyMap) -> RobotState:
    """Exact unicycle integration over ``dt``. A move that would end in an
    occupied cell keeps the old position but still applies the rotation."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    speed, turn = command
    th = state.theta
    if abs(turn) > 1e-12:
        x = state.x + speed / turn * (math.sin(th + turn * dt) - math.sin(th))
        y = state.y - speed / turn * (math.cos(th + turn * dt) - math.cos(th))
    else:
        x = state.x + speed * dt * math.cos(th)
        y = state.y + speed * dt * math.sin(th)
    new_th = float(wrap_angle(th + turn * dt))
    if grid.is_free(x, y):
        return RobotState(x, y, new_th, state.time + dt, state.distance + abs(speed) * dt)
    return RobotState(state.x, state.y, new_th, state.time + dt, state.distance)


@dataclass
class RandomWalkPolicy:
    """Drive forward with a small random wander; when the ray straight ahead
    is shorter than ``clearance``, spin in a randomly chosen direction until
    at least ``resume`` metres are clear."""

    speed: float = NOMINAL_SPEED
    turn_rate: float = 1.0
    wander: float = 0.3
    clearance: float = 0.5
    resume: float = 1.0
    _spin: int = 0

    def __call__(self, state: RobotState, grid: OccupancyMap, rng: np.random.Generator):
        ahead = raycast(grid, (state.x, state.y), state.theta, self.resume)
        if self._spin:
            if ahead >= self.resume:
                self._spin = 0
            else:
                return (0.0, self._spin * self.turn_rate)
        if ahead < self.clearance:
            self._spin = 1 if rng.random() < 0.5 else -1
            return (0.0, self._spin * self.turn_rate)
        return (self.speed, float(rng.normal(0.0, self.wander)))


@dataclass
class WaypointPolicy:
    """Follow a fixed list of world waypoints, turning in place when the
    heading error is large. Stops after the last waypoint."""

    waypoints: list
    speed: float = NOMINAL_SPEED
    turn_rate: float = 1.0
    reach: float = 0.1
    _index: int = 0

    @property
    def done(self) -> bool:
        return self._index >= len(self.waypoints)

    def __call__(self, state: RobotState, grid: OccupancyMap, rng=None):
        while not self.done:
            wx, wy = self.waypoints[self._index]
            if math.hypot(wx - state.x, wy - state.y) > self.reach:
                break
            self._index += 1
        if self.done:
            return (0.0, 0.0)
        err = float(wrap_angle(math.atan2(wy - state.y, wx - state.x) - state.theta))
        if abs(err) > 0.3:
            return (0.0, math.copysign(self.turn_rate, err))
        return (self.speed, max(-self.turn_rate, min(self.turn_rate, 3.0 * err)))


def odometry_measurement(true_delta: OdometryDelta, model: OdometryNoiseModel,
                         rng: np.random.Generator) -> OdometryDelta:
    """Perturb a true body-frame delta with zero-mean Gaussian noise whose
    scale grows with distance travelled and angle turned."""
    n = rng.standard_normal(3)
    trans = true_delta.translation
    sd_t = model.alpha_trans * trans
    sd_w = math.hypot(model.alpha_rot * abs(true_delta.w), model.alpha_cross * trans)
    return OdometryDelta(true_delta.u + sd_t * n[0],
                         true_delta.v + sd_t * n[1],
                         true_delta.w + sd_w * n[2])


def beam_angles(beam_count: int, fov: float) -> np.ndarray:
    if fov >= 2 * math.pi - 1e-9:
        return -math.pi + 2 * math.pi * np.arange(beam_count) / beam_count
    if beam_count == 1:
        return np.zeros(1)
    return np.linspace(-fov / 2, fov / 2, beam_count)


def simulate_scan(grid: OccupancyMap, pose, beam_count: int = 180, fov: float = 2 * math.pi,
                  max_range: float = 8.0, range_noise_sigma: float = 0.0,
                  rng: np.random.Generator | None = None) -> LidarScan:
    angles = beam_angles(beam_count, fov)
    ranges = raycast_many(grid, pose[0], pose[1], pose[2] + angles, max_range)
    if np.any(ranges < 0):
        raise InvalidOriginError(f"scan pose {tuple(pose)} is not in free space")
    if range_noise_sigma > 0:
        if rng is None:
            raise ValueError("noisy scans need an rng")
        hit = ranges < max_range
        ranges = np.where(hit, ranges + rng.normal(0.0, range_noise_sigma, ranges.shape), ranges)
        ranges = np.clip(ranges, 0.0, max_range)
    return LidarScan(angles, ranges, max_range)


def scan_from_config(grid, pose, cfg: ScanConfig, rng=None) -> LidarScan:
    return simulate_scan(grid, pose, cfg.beam_count, cfg.fov, cfg.max_range, cfg.range_noise, rng)


def random_free_pose(grid: OccupancyMap, rng: np.random.Generator, margin: float = 0.3):
    """Uniform free pose at least ``margin`` metres from any obstacle."""
    field = grid.distance_field().values
    j, i = np.nonzero(field >= margin)
    if i.size == 0:
        j, i = np.nonzero(grid.free)
    n = int(rng.integers(i.size))
    cx = i[n] + rng.random()
    cy = j[n] + rng.random()
    x, y = grid.to_world(cx, cy)
    return (float(x), float(y), float(rng.uniform(-math.pi, math.pi)))


@dataclass
class Simulation:
    """Ground truth plus noisy odometry for one seeded run.

    Scan noise draws from ``scan_rng`` when given, so runs that take scans
    at different times still share the same trajectory and odometry.
    """

    grid: OccupancyMap
    state: RobotState
    policy: object
    rng: np.random.Generator
    odom_noise: OdometryNoiseModel = OdometryNoiseModel()
    scan_cfg: ScanConfig = ScanConfig()
    dt: float = DT
    scan_rng: np.random.Generator | None = None

    def advance(self) -> tuple[OdometryDelta, OdometryDelta]:
        """Move one tick; returns (true delta, measured delta)."""
        cmd = self.policy(self.state, self.grid, self.rng)
        new = step_robot(self.state, cmd, self.dt, self.grid)
        true = relative_delta(self.state.pose, new.pose)
        self.state = new
        return true, odometry_measurement(true, self.odom_noise, self.rng)

    def scan(self) -> LidarScan:
        rng = self.scan_rng if self.scan_rng is not None else self.rng
        return scan_from_config(self.grid, self.state.pose, self.scan_cfg, rng)


TRAJECTORY_FIELDS = ["t", "x", "y", "theta", "odom_u", "odom_v", "odom_w"]


def write_trajectory(path, rows) -> None:
    """rows: iterables of (t, x, y, theta, odom_u, odom_v, odom_w)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_FIELDS)
        for r in rows:
            w.writerow([f"{v:.6f}" for v in r])


def read_trajectory(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if header[:7] != TRAJECTORY_FIELDS:
            raise ValueError(f"unexpected trajectory header {header}")
        return np.array([[float(v) for v in row[:7]] for row in rd])


__all__ = [
    "RobotState", "OdometryNoiseModel", "ScanConfig", "RandomWalkPolicy", "WaypointPolicy",
    "Simulation", "step_robot", "odometry_measurement", "simulate_scan", "relative_delta",
    "compose_pose", "random_free_pose", "write_trajectory", "read_trajectory",
]
