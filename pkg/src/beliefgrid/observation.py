"""LIDAR likelihood field, dithered state sampling and the sampled update."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .belief import BeliefTensor
from .kernels import backend
from .maps import DistanceField, OccupancyMap

# Endpoints are pushed this far (cells) past the measured range so a ray that
# stops exactly on a cell boundary is scored in the cell it hit.
ENDPOINT_NUDGE = 1e-6
MAX_RANGE_SLACK = 1e-9


@dataclass(frozen=True)
class LidarScan:
    angles: np.ndarray   # sensor frame, ascending
    ranges: np.ndarray   # metres, max_range means "no return"
    max_range: float

    def __post_init__(self):
        a = np.asarray(self.angles, dtype=float)
        r = np.asarray(self.ranges, dtype=float)
        if a.ndim != 1 or a.shape != r.shape or a.size < 1:
            raise ValueError("scan needs matching, non-empty angle and range arrays")
        if not self.max_range > 0:
            raise ValueError("max_range must be positive")
        if np.any(r < 0) or np.any(r > self.max_range + MAX_RANGE_SLACK):
            raise ValueError("ranges must lie in [0, max_range]")
        if np.any(np.diff(a) < 0):
            raise ValueError("beam angles must be sorted ascending")
        object.__setattr__(self, "angles", a)
        object.__setattr__(self, "ranges", r)
        object.__setattr__(self, "max_range", float(self.max_range))

    def __len__(self):
        return self.angles.size


@dataclass(frozen=True)
class LikelihoodParams:
    sigma_hit: float = 0.2
    weight_floor: float = 0.05
    beam_stride: int = 4

    def __post_init__(self):
        if not self.sigma_hit > 0:
            raise ValueError("sigma_hit must be positive")
        if not 0 < self.weight_floor < 1:
            raise ValueError("weight_floor must lie in (0, 1)")
        if self.beam_stride < 1:
            raise ValueError("beam_stride must be >= 1")


@dataclass(frozen=True)
class SampleSet:
    cells: np.ndarray    # (N, 2) int, columns (i, j)
    source_mass: float

    def __len__(self):
        return self.cells.shape[0]

    @property
    def entries(self) -> list[tuple[int, int]]:
        return [(int(i), int(j)) for i, j in self.cells]


# -- sampling ------------------------------------------------------------------

def dither_samples(bmap: np.ndarray, budget: int) -> SampleSet:
    """Pick cells with density proportional to ``bmap`` by error diffusion.

    The map is scaled to total mass ``budget`` and quantized with serpentine
    Floyd-Steinberg at threshold 0.5. A cell yields at most one sample; mass
    above one is diffused onward.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    bmap = np.asarray(bmap, dtype=float)
    if np.any(bmap < 0):
        raise ValueError("belief map must be nonnegative")
    total = float(bmap.sum())
    if total <= 0:
        return SampleSet(np.empty((0, 2), dtype=np.int64), 0.0)
    js, is_ = backend.dither(np.ascontiguousarray(bmap * (budget / total)))
    return SampleSet(np.stack([is_, js], axis=1), total)


# -- likelihood ------------------------------------------------------------------

def log_score_table(field: DistanceField, params: LikelihoodParams) -> np.ndarray:
    """Per-cell log of the floor-mixed endpoint score; exactly 0 on obstacles."""
    table = field._log_tables.get(params)
    if table is None:
        d = field.values
        p = (1 - params.weight_floor) * np.exp(-0.5 * (d / params.sigma_hit) ** 2) + params.weight_floor
        table = np.log(p)
        table[d == 0] = 0.0
        table.setflags(write=False)
        field._log_tables[params] = table
    return table


def scored_beams(scan: LidarScan, params: LikelihoodParams, resolution: float):
    """Beam angles and endpoint ranges (cells) used for scoring: every
    ``beam_stride``-th beam that returned before max range."""
    idx = np.arange(0, len(scan), params.beam_stride)
    keep = scan.ranges[idx] < scan.max_range - MAX_RANGE_SLACK
    idx = idx[keep]
    return scan.angles[idx], scan.ranges[idx] / resolution + ENDPOINT_NUDGE


class LikelihoodModel:
    """Likelihood-field scorer bound to one map. Returns geometric-mean beam
    scores, so values lie in [weight_floor, 1] whatever the beam count."""

    def __init__(self, grid: OccupancyMap, field: DistanceField | None = None,
                 params: LikelihoodParams | None = None):
        self.grid = grid
        self.field = field if field is not None else grid.distance_field()
        self.params = params or LikelihoodParams()
        self.table = log_score_table(self.field, self.params)
        self.log_floor = math.log(self.params.weight_floor)

    @property
    def min_likelihood(self) -> float:
        return self.params.weight_floor

    def _free_mask(self, cx, cy):
        ix = np.floor(cx).astype(np.int64)
        iy = np.floor(cy).astype(np.int64)
        g = self.grid
        ok = (ix >= 0) & (iy >= 0) & (ix < g.width) & (iy < g.height)
        ok[ok] = ~g.occupied[iy[ok], ix[ok]]
        return ok

    def loglik_poses(self, poses: np.ndarray, scan: LidarScan) -> np.ndarray:
        """Mean log score for world poses (N, 3)."""
        poses = np.atleast_2d(np.asarray(poses, dtype=float))
        cx, cy = self.grid.to_cell(poses[:, 0], poses[:, 1])
        angles, ranges = scored_beams(scan, self.params, self.grid.resolution)
        if ranges.size == 0:
            out = np.zeros(poses.shape[0])
        else:
            out = backend.loglik_poses(self.table, np.ascontiguousarray(cx), np.ascontiguousarray(cy),
                                       np.ascontiguousarray(poses[:, 2]), angles, ranges, self.log_floor)
        return np.where(self._free_mask(cx, cy), out, self.log_floor)

    def loglik_cells(self, cells: np.ndarray, headings: np.ndarray, scan: LidarScan) -> np.ndarray:
        """Mean log score at the centres of ``cells`` (N, 2 as i, j) for every
        heading; result has shape (N, len(headings))."""
        cells = np.asarray(cells)
        cx = cells[:, 0].astype(float) + 0.5
        cy = cells[:, 1].astype(float) + 0.5
        angles, ranges = scored_beams(scan, self.params, self.grid.resolution)
        headings = np.asarray(headings, dtype=float)
        if ranges.size == 0 or cells.shape[0] == 0:
            out = np.zeros((cells.shape[0], headings.size))
        else:
            a = headings[:, None] + angles[None, :]
            out = backend.loglik_grid(self.table, cx, cy, np.cos(a), np.sin(a), ranges, self.log_floor)
        out[~self._free_mask(cx, cy)] = self.log_floor
        return out

    def likelihood(self, pose, scan: LidarScan) -> float:
        return float(np.exp(self.loglik_poses(np.asarray(pose, dtype=float)[None], scan)[0]))


def scan_likelihood(grid: OccupancyMap, field: DistanceField, pose, scan: LidarScan,
                    params: LikelihoodParams | None = None) -> float:
    """Likelihood-field score of ``scan`` taken at world ``pose`` (x, y, theta)."""
    return LikelihoodModel(grid, field, params).likelihood(pose, scan)


# -- sampled Bayes update --------------------------------------------------------

def observation_update(belief: BeliefTensor, samples: SampleSet, scan: LidarScan,
                       grid: OccupancyMap, field: DistanceField | None = None,
                       params: LikelihoodParams | None = None, *,
                       model: LikelihoodModel | None = None, inplace: bool = False) -> BeliefTensor:
    """Weight sampled states by the scan likelihood and renormalise.

    Every channel of each sampled cell is multiplied by the likelihood of its
    own pose; all other states are multiplied by the mean sampled likelihood.
    The result is rescaled to a maximum of 1.
    """
    out = belief if inplace else belief.copy()
    if len(samples) == 0:
        return out
    if model is None:
        model = LikelihoodModel(grid, field, params)
    lik = np.exp(model.loglik_cells(samples.cells, belief.channel_angles(), scan))
    mean = float(lik.mean())
    i, j = samples.cells[:, 0], samples.cells[:, 1]
    vals = out.values
    vals[:, j, i] *= (lik / mean).T.astype(vals.dtype)
    peak = float(vals.max())
    if peak > 0:
        vals *= 1.0 / peak
    return out
