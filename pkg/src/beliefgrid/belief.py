"""Dense W x H x Theta belief tensor and its odometry/map update.

The tensor is stored channel-major as ``values[k, j, i]`` (orientation,
row, column). Channel ``k`` stands for heading ``k * delta_theta + theta``,
where ``theta`` accumulates odometry rotation so the channels themselves never
have to be rotated.

One :func:`step` is: per-channel affine shift, map mask, spatial Gaussian blur
with a heading-dependent covariance, circular blur across channels, map mask,
and division by the blur of the all-free tensor (the "kernel activation"),
which keeps walls from acting as probability sinks.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .kernels import backend
from .maps import OccupancyMap

RESCALE_BELOW = 1e-6
ACTIVATION_FLOOR = 1e-12
DEGENERATE_SIGMA = 0.1  # cells (or channels)


class BeliefExtinguishedError(RuntimeError):
    """Every state has been ruled out."""


def wrap_angle(a):
    """Wrap to [-pi, pi)."""
    return (np.asarray(a) + math.pi) % (2 * math.pi) - math.pi


@dataclass(frozen=True)
class OdometryDelta:
    """Body-frame motion since the previous update: forward ``u`` and left
    ``v`` in metres, heading change ``w`` in radians."""

    u: float = 0.0
    v: float = 0.0
    w: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(c) for c in (self.u, self.v, self.w)):
            raise ValueError("odometry components must be finite")

    def compose(self, other: OdometryDelta) -> OdometryDelta:
        """Motion ``self`` followed by ``other`` (expressed in the frame
        reached after ``self``)."""
        c, s = math.cos(self.w), math.sin(self.w)
        return OdometryDelta(self.u + c * other.u - s * other.v,
                             self.v + s * other.u + c * other.v,
                             self.w + other.w)

    @property
    def translation(self) -> float:
        return math.hypot(self.u, self.v)


@dataclass(frozen=True)
class MotionNoise:
    """Per-step motion uncertainty: body-frame longitudinal/lateral standard
    deviations in metres and heading standard deviation in radians."""

    sigma_x: float = 0.03
    sigma_y: float = 0.03
    sigma_theta: float = 0.015

    def __post_init__(self):
        if not (self.sigma_x > 0 and self.sigma_y > 0 and self.sigma_theta > 0):
            raise ValueError("motion noise standard deviations must be positive")


@dataclass(eq=False)
class BeliefTensor:
    values: np.ndarray          # (channels, height, width), nonnegative
    resolution: float           # metres per cell (delta_w == delta_h)
    theta: float = 0.0          # accumulated heading offset theta_t
    origin: tuple[float, float] = (0.0, 0.0)

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    @property
    def delta_theta(self) -> float:
        return 2 * math.pi / self.channels

    def channel_angles(self) -> np.ndarray:
        return np.arange(self.channels) * self.delta_theta + self.theta

    def copy(self) -> BeliefTensor:
        return BeliefTensor(self.values.copy(), self.resolution, self.theta, self.origin)


def init_uniform(grid: OccupancyMap, channels: int, dtype=np.float64) -> BeliefTensor:
    """Ones on every free cell in every channel, zeros on obstacles."""
    if channels < 4 or channels % 2:
        raise ValueError("channels must be an even number >= 4")
    if grid.free_count == 0:
        raise ValueError("map has no free cells")
    vals = np.repeat(grid.free[None].astype(dtype), channels, axis=0)
    return BeliefTensor(vals, grid.resolution, 0.0, grid.origin)


def motion_vector(delta: OdometryDelta, k: int, theta: float, delta_theta: float,
                  resolution: float = 1.0) -> tuple[float, float]:
    """Odometry translation rotated into the world frame of channel ``k``,
    in cells."""
    a = k * delta_theta + theta
    if a == 0.0:
        return delta.u / resolution, delta.v / resolution
    c, s = math.cos(a), math.sin(a)
    return ((c * delta.u - s * delta.v) / resolution,
            (s * delta.u + c * delta.v) / resolution)


def channel_shifts(belief: BeliefTensor, delta: OdometryDelta) -> np.ndarray:
    n = belief.channels
    out = np.empty((n, 2))
    for k in range(n):
        out[k] = motion_vector(delta, k, belief.theta, belief.delta_theta, belief.resolution)
    return out


def apply_motion(belief: BeliefTensor, delta: OdometryDelta) -> BeliefTensor:
    """Translate each channel by its motion vector (bilinear); no masking."""
    out = np.empty_like(belief.values)
    mask = np.ones(belief.values.shape[1:], dtype=bool)
    backend.shift_pass(belief.values, mask, channel_shifts(belief, delta), out)
    return BeliefTensor(out, belief.resolution, belief.theta + delta.w, belief.origin)


# -- kernels -----------------------------------------------------------------

@dataclass(frozen=True)
class Kernels:
    """``spatial[m]`` is the blur for heading ``m * 2pi / channels``;
    ``angular`` is the circular blur across channels (odd length)."""

    spatial: np.ndarray
    angular: np.ndarray

    @property
    def channels(self) -> int:
        return self.spatial.shape[0]


def gaussian_stencil(sigma_x: float, sigma_y: float, angle: float, radius: int) -> np.ndarray:
    """Unnormalised exp(-d' S^-1 d / 2) on a (2r+1)^2 stencil indexed [dy, dx],
    with S = R(angle) diag(sx^2, sy^2) R(angle)'."""
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    cov = rot @ np.diag([sigma_x ** 2, sigma_y ** 2]) @ rot.T
    prec = np.linalg.inv(cov)
    d = np.arange(-radius, radius + 1, dtype=float)
    dy, dx = np.meshgrid(d, d, indexing="ij")
    q = prec[0, 0] * dx * dx + 2 * prec[0, 1] * dx * dy + prec[1, 1] * dy * dy
    return np.exp(-0.5 * q)


def build_kernels(noise: MotionNoise, channels: int, resolution: float) -> Kernels:
    sx = noise.sigma_x / resolution
    sy = noise.sigma_y / resolution
    sa = noise.sigma_theta / (2 * math.pi / channels)
    dtheta = 2 * math.pi / channels

    if min(sx, sy) < DEGENERATE_SIGMA:
        warnings.warn(f"spatial sigma ({sx:.3g}, {sy:.3g}) cells is below "
                      f"{DEGENERATE_SIGMA}; using an identity kernel", RuntimeWarning, stacklevel=2)
        spatial = np.zeros((channels, 3, 3))
        spatial[:, 1, 1] = 1.0
    else:
        r = max(1, math.ceil(3 * max(sx, sy)))
        spatial = np.empty((channels, 2 * r + 1, 2 * r + 1))
        for m in range(channels):
            # an isotropic kernel is rotation invariant; reuse it exactly
            g = gaussian_stencil(sx, sy, 0.0 if sx == sy else m * dtheta, r)
            spatial[m] = g / g.sum()

    if sa < DEGENERATE_SIGMA:
        warnings.warn(f"angular sigma {sa:.3g} channels is below {DEGENERATE_SIGMA}; "
                      "using an identity kernel", RuntimeWarning, stacklevel=2)
        angular = np.ones(1)
    else:
        r = min(max(1, math.ceil(3 * sa)), (channels - 1) // 2)
        d = np.arange(-r, r + 1, dtype=float)
        angular = np.exp(-0.5 * (d / sa) ** 2)
        angular /= angular.sum()
    return Kernels(spatial, angular)


def kernel_offset(theta: float, channels: int) -> int:
    """Index shift so channel k uses the kernel built for its actual heading
    ``k * delta_theta + theta``."""
    return int(round(theta / (2 * math.pi / channels))) % channels


# -- activation --------------------------------------------------------------

@dataclass(eq=False)
class Activation:
    """Blur of the all-free tensor, ``values[m]`` built with kernel offset 0,
    and its masked reciprocal used by :func:`step`. When every channel comes
    out identical (isotropic kernels) both hold a single plane."""

    values: np.ndarray
    inverse: np.ndarray


def kernel_activation(grid: OccupancyMap, kernels: Kernels, dtype=np.float64) -> Activation:
    n = kernels.channels
    free = grid.free
    b0 = np.repeat(free[None].astype(dtype), n, axis=0)
    scratch = np.empty_like(b0)
    backend.motion_pass(b0, free, np.zeros((n, 2)), kernels.spatial.astype(dtype), 0, scratch)
    act = np.empty_like(b0)
    backend.angular_pass(scratch, kernels.angular.astype(dtype), b0, 0, act)
    if np.all(act == act[:1]):
        act = act[:1].copy()
    inv = np.where(free[None], 1.0 / np.maximum(act, ACTIVATION_FLOOR), 0.0).astype(dtype)
    return Activation(act, inv)


# -- the update --------------------------------------------------------------

def step(belief: BeliefTensor, delta: OdometryDelta, grid: OccupancyMap, kernels: Kernels,
         activation: Activation, *, scratch: np.ndarray | None = None,
         inplace: bool = False) -> BeliefTensor:
    """One map-corrected odometry update.

    Raises :class:`BeliefExtinguishedError` if no state survives. The result
    is rescaled to a maximum of 1 only when its maximum drops below
    ``RESCALE_BELOW``.
    """
    vals = belief.values
    n = belief.channels
    if scratch is None:
        scratch = np.empty_like(vals)
    out = vals if inplace else np.empty_like(vals)
    spatial = kernels.spatial if kernels.spatial.dtype == vals.dtype else kernels.spatial.astype(vals.dtype)
    angular = kernels.angular if kernels.angular.dtype == vals.dtype else kernels.angular.astype(vals.dtype)
    offset = kernel_offset(belief.theta, n)

    backend.motion_pass(vals, grid.free, channel_shifts(belief, delta), spatial, offset, scratch)
    peak = backend.angular_pass(scratch, angular, activation.inverse, offset, out)
    if not peak > 0:
        raise BeliefExtinguishedError("belief tensor is zero everywhere after the motion update")
    if peak < RESCALE_BELOW:
        out *= 1.0 / peak

    if inplace:
        belief.theta += delta.w
        return belief
    return BeliefTensor(out, belief.resolution, belief.theta + delta.w, belief.origin)


# -- read-out ----------------------------------------------------------------

def belief_map(belief: BeliefTensor) -> np.ndarray:
    """Per-cell maximum over channels, shape (height, width)."""
    return belief.values.max(axis=0)


@dataclass(frozen=True)
class PoseEstimate:
    x: float
    y: float
    theta: float
    confidence: float
    cell: tuple[int, int, int]  # (k, j, i)


def argmax_state(belief: BeliefTensor) -> PoseEstimate:
    """Most probable state. Ties go to the lowest (k, j, i)."""
    vals = belief.values
    flat = int(np.argmax(vals))
    k, j, i = np.unravel_index(flat, vals.shape)
    peak = float(vals[k, j, i])
    total = float(vals.sum())
    x = float(belief.origin[0] + (i + 0.5) * belief.resolution)
    y = float(belief.origin[1] + (j + 0.5) * belief.resolution)
    th = float(wrap_angle(k * belief.delta_theta + belief.theta))
    return PoseEstimate(x, y, th, peak / total if total > 0 else 0.0, (int(k), int(j), int(i)))


def refined_estimate(belief: BeliefTensor, radius: int = 1) -> PoseEstimate:
    """Argmax state refined to sub-cell/sub-channel precision.

    Position is the belief-weighted centroid of the argmax channel over a
    (2r+1)^2 window; heading is the weighted mean channel offset over the
    neighbouring channels at the argmax cell.
    """
    base = argmax_state(belief)
    k, j, i = base.cell
    vals = belief.values
    n, h, w = vals.shape
    j0, j1 = max(0, j - radius), min(h, j + radius + 1)
    i0, i1 = max(0, i - radius), min(w, i + radius + 1)
    win = vals[k, j0:j1, i0:i1]
    mass = win.sum()
    jj, ii = np.mgrid[j0:j1, i0:i1]
    cy = float((win * (jj + 0.5)).sum() / mass)
    cx = float((win * (ii + 0.5)).sum() / mass)
    offs = np.arange(-radius, radius + 1)
    wk = vals[(k + offs) % n, j, i]
    dk = float((wk * offs).sum() / wk.sum())
    th = float(wrap_angle((k + dk) * belief.delta_theta + belief.theta))
    return PoseEstimate(belief.origin[0] + cx * belief.resolution,
                        belief.origin[1] + cy * belief.resolution,
                        th, base.confidence, base.cell)
