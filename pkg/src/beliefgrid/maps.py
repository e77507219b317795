"""Occupancy maps: loading, canonical PGM output, distance field, ray casting.

Conventions used everywhere in the package: cell (i, j) is column i, row j of
the image; world x grows with i and world y grows with j (image "down").
Headings are measured from +x towards +y. A continuous cell coordinate
``(cx, cy)`` maps to world ``origin + (cx, cy) * resolution``; the centre of
cell (i, j) is at cell coordinate ``(i + 0.5, j + 0.5)``.
"""

from __future__ import annotations

import io
import math
import re
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .kernels import backend

DEFAULT_THRESHOLD = 250


class MapError(ValueError):
    """Base class for map parsing problems."""


class MapHeaderError(MapError):
    """Malformed or truncated image header / payload."""


class EmptyMapError(MapError):
    """Image with a zero width or height."""


class UnsupportedBitDepthError(MapError):
    """Anything other than 8-bit grayscale."""


class InvalidOriginError(ValueError):
    """Ray or scan requested from inside an obstacle."""


@dataclass(eq=False)
class OccupancyMap:
    """Binary traversability grid.

    ``occupied`` is an ``(height, width)`` boolean array. The outer ring of
    cells is forced occupied on construction so rays and motion always stay
    on the grid.
    """

    occupied: np.ndarray
    resolution: float = 0.1
    origin: tuple[float, float] = (0.0, 0.0)
    _field: DistanceField | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        occ = np.array(self.occupied, dtype=bool, copy=True)
        if occ.ndim != 2 or occ.shape[0] < 1 or occ.shape[1] < 1:
            raise EmptyMapError(f"map must be a non-empty 2D grid, got shape {occ.shape}")
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        occ[0, :] = occ[-1, :] = True
        occ[:, 0] = occ[:, -1] = True
        occ.setflags(write=False)
        self.occupied = occ
        self.resolution = float(self.resolution)
        self.origin = (float(self.origin[0]), float(self.origin[1]))

    @property
    def height(self) -> int:
        return self.occupied.shape[0]

    @property
    def width(self) -> int:
        return self.occupied.shape[1]

    @property
    def free(self) -> np.ndarray:
        return ~self.occupied

    @property
    def free_count(self) -> int:
        return int(np.count_nonzero(~self.occupied))

    def to_cell(self, x, y):
        """World metres -> continuous cell coordinates."""
        return ((np.asarray(x) - self.origin[0]) / self.resolution,
                (np.asarray(y) - self.origin[1]) / self.resolution)

    def to_world(self, cx, cy):
        return (self.origin[0] + np.asarray(cx) * self.resolution,
                self.origin[1] + np.asarray(cy) * self.resolution)

    def cell_center(self, i, j):
        return self.to_world(np.asarray(i) + 0.5, np.asarray(j) + 0.5)

    def cell_of(self, x, y):
        cx, cy = self.to_cell(x, y)
        return np.floor(cx).astype(np.int64), np.floor(cy).astype(np.int64)

    def is_free(self, x, y) -> bool:
        i, j = self.cell_of(x, y)
        if i < 0 or j < 0 or i >= self.width or j >= self.height:
            return False
        return not self.occupied[j, i]

    def free_cells(self) -> np.ndarray:
        """(N, 2) array of (i, j) for free cells in row-major order."""
        j, i = np.nonzero(~self.occupied)
        return np.stack([i, j], axis=1)

    def distance_field(self) -> DistanceField:
        if self._field is None:
            self._field = distance_field(self)
        return self._field


@dataclass(eq=False)
class DistanceField:
    """Per-cell Euclidean distance (metres) from each cell centre to the
    nearest occupied cell centre."""

    values: np.ndarray
    resolution: float
    _log_tables: dict = field(default_factory=dict, init=False, repr=False)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def distance_field(grid: OccupancyMap) -> DistanceField:
    """Exact EDT of the free space, in metres."""
    vals = ndimage.distance_transform_edt(~grid.occupied) * grid.resolution
    vals.setflags(write=False)
    return DistanceField(vals, grid.resolution)


# -- image I/O ---------------------------------------------------------------

_PGM_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _pgm_gray(data: bytes) -> np.ndarray:
    magic = data[:2]
    pos = 2
    tokens = []
    for _ in range(3):
        m = _PGM_TOKEN.match(data, pos)
        if m is None:
            raise MapHeaderError("truncated PGM header")
        tokens.append(m.group(1))
        pos = m.end()
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise MapHeaderError(f"non-numeric PGM header field: {exc}") from None
    if width <= 0 or height <= 0:
        raise EmptyMapError(f"PGM has zero dimension ({width}x{height})")
    if maxval <= 0 or maxval >= 65536:
        raise MapHeaderError(f"invalid PGM maxval {maxval}")
    if maxval > 255:
        raise UnsupportedBitDepthError(f"16-bit PGM (maxval {maxval}) is not supported")

    if magic == b"P5":
        # exactly one whitespace byte separates the header from the raster
        start = pos + 1
        raster = data[start:start + width * height]
        if len(raster) != width * height:
            raise MapHeaderError(f"PGM raster has {len(raster)} bytes, expected {width * height}")
        gray = np.frombuffer(raster, dtype=np.uint8).reshape(height, width).astype(np.int64)
    else:
        body = data[pos:].split()
        if len(body) < width * height:
            raise MapHeaderError(f"PGM raster has {len(body)} values, expected {width * height}")
        try:
            gray = np.array([int(v) for v in body[:width * height]], dtype=np.int64)
        except ValueError:
            raise MapHeaderError("non-numeric value in P2 raster") from None
        gray = gray.reshape(height, width)
    if gray.max(initial=0) > maxval:
        raise MapHeaderError("pixel value exceeds maxval")
    if maxval != 255:
        gray = (gray * 255 + maxval // 2) // maxval
    return gray


def _png_gray(data: bytes) -> np.ndarray:
    from PIL import Image, UnidentifiedImageError

    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise MapHeaderError(f"unreadable PNG: {exc}") from None
    if img.mode != "L":
        raise UnsupportedBitDepthError(f"PNG mode {img.mode!r} is not 8-bit grayscale")
    gray = np.asarray(img, dtype=np.int64)
    if gray.size == 0:
        raise EmptyMapError("PNG has zero dimension")
    return gray


def decode_gray(data: bytes) -> np.ndarray:
    if data[:2] in (b"P2", b"P5"):
        return _pgm_gray(data)
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return _png_gray(data)
    raise MapHeaderError("not a PGM (P2/P5) or PNG image")


def load_map(data: bytes, threshold: int = DEFAULT_THRESHOLD, resolution: float = 0.1,
             origin: tuple[float, float] = (0.0, 0.0)) -> OccupancyMap:
    """Parse image bytes into an occupancy map.

    Pixels with gray value >= ``threshold`` are free; everything else
    (including gray "unknown" pixels) is occupied.
    """
    if not 0 < threshold < 255:
        raise ValueError("threshold must lie in (0, 255)")
    gray = decode_gray(bytes(data))
    return OccupancyMap(gray < threshold, resolution, origin)


def read_map(path, threshold: int = DEFAULT_THRESHOLD, resolution: float = 0.1) -> OccupancyMap:
    with open(path, "rb") as fh:
        return load_map(fh.read(), threshold, resolution)


def to_pgm(grid: OccupancyMap) -> bytes:
    """Canonical P5 encoding: maxval 255, free = 255, occupied = 0."""
    header = f"P5\n{grid.width} {grid.height}\n255\n".encode("ascii")
    raster = np.where(grid.occupied, 0, 255).astype(np.uint8)
    return header + raster.tobytes()


def write_pgm(grid: OccupancyMap, path) -> None:
    with open(path, "wb") as fh:
        fh.write(to_pgm(grid))


# -- ray casting -------------------------------------------------------------

def raycast(grid: OccupancyMap, origin, angle: float, max_range: float) -> float:
    """Range (m) from ``origin`` to the first occupied cell along ``angle``.

    ``origin`` is ``(x, y)`` in world metres, or ``(x, y, theta)`` in which
    case ``angle`` is relative to ``theta``. The returned range is the
    distance to the boundary where the ray enters the first occupied cell,
    clamped to ``max_range``.
    """
    if max_range <= 0:
        raise ValueError("max_range must be positive")
    x, y = origin[0], origin[1]
    if len(origin) > 2:
        angle = angle + origin[2]
    cx, cy = grid.to_cell(x, y)
    t = backend.cast_ray(grid.occupied, float(cx), float(cy), math.cos(angle), math.sin(angle),
                         max_range / grid.resolution)
    if t < 0:
        raise InvalidOriginError(f"ray origin ({x:.3f}, {y:.3f}) is not in free space")
    return min(t * grid.resolution, max_range)


def raycast_many(grid: OccupancyMap, xs, ys, angles, max_range: float) -> np.ndarray:
    """Vectorised :func:`raycast` over world positions and absolute angles.

    Rays from occupied origins come back as ``-1``.
    """
    cx, cy = grid.to_cell(np.asarray(xs, float), np.asarray(ys, float))
    cx, cy, angles = np.broadcast_arrays(cx, cy, np.asarray(angles, float))
    t = backend.cast_rays(grid.occupied, np.ascontiguousarray(cx, dtype=float).ravel(),
                          np.ascontiguousarray(cy, dtype=float).ravel(),
                          np.ascontiguousarray(angles, dtype=float).ravel(),
                          max_range / grid.resolution)
    out = np.where(t < 0, -1.0, np.minimum(t * grid.resolution, max_range))
    return out.reshape(cx.shape)
