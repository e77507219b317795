"""File formats: scan CSV, CARMEN laser/odometry logs, belief snapshots and
belief-map PNG heatmaps."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .belief import BeliefTensor, OdometryDelta, belief_map
from .observation import LidarScan

# -- scan CSV --------------------------------------------------------------------
#
# One scan per line: ``t, a_0, ..., a_{n-1}, r_0, ..., r_{n-1}``. A literal
# ``/`` field between the angles and the ranges is accepted on input.


def format_scan_line(t: float, scan: LidarScan) -> str:
    vals = [f"{t:.6f}"] + [f"{a:.9g}" for a in scan.angles] + [f"{r:.9g}" for r in scan.ranges]
    return ",".join(vals)


def parse_scan_line(line: str, max_range: float) -> tuple[float, LidarScan]:
    fields = [f.strip() for f in line.strip().split(",") if f.strip()]
    if len(fields) < 3:
        raise ValueError("scan line needs a time and at least one beam")
    t = float(fields[0])
    rest = fields[1:]
    if "/" in rest:
        k = rest.index("/")
        angles, ranges = rest[:k], rest[k + 1:]
    else:
        if len(rest) % 2:
            raise ValueError(f"odd number of beam fields ({len(rest)})")
        angles, ranges = rest[:len(rest) // 2], rest[len(rest) // 2:]
    if len(angles) != len(ranges):
        raise ValueError("angle and range counts differ")
    r = np.minimum(np.array(ranges, dtype=float), max_range)
    return t, LidarScan(np.array(angles, dtype=float), r, max_range)


def write_scans(path, items) -> None:
    """items: iterable of (t, LidarScan)."""
    with open(path, "w") as fh:
        for t, scan in items:
            fh.write(format_scan_line(t, scan) + "\n")


def read_scans(path, max_range: float = 8.0) -> list[tuple[float, LidarScan]]:
    out = []
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            try:
                out.append(parse_scan_line(line, max_range))
            except ValueError as exc:
                raise ValueError(f"{path}:{n}: {exc}") from None
    return out


# -- CARMEN logs -----------------------------------------------------------------

@dataclass(frozen=True)
class OdomRecord:
    x: float
    y: float
    theta: float
    timestamp: float


@dataclass(frozen=True)
class LaserRecord:
    ranges: np.ndarray
    pose: tuple[float, float, float]       # laser pose (corrected, if the log has one)
    odom: tuple[float, float, float]       # raw odometry pose at the scan
    timestamp: float


def parse_carmen(lines) -> tuple[list[OdomRecord], list[LaserRecord]]:
    """Parse ``ODOM`` and ``FLASER`` records from CARMEN log lines; other
    record types and comments are skipped.

    ``FLASER n r_1 .. r_n x y theta odom_x odom_y odom_theta timestamp host logger_ts``
    ``ODOM x y theta tv rv accel timestamp host logger_ts``
    """
    odom, laser = [], []
    for n, line in enumerate(lines, 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        tag = parts[0]
        try:
            if tag == "ODOM":
                x, y, th = (float(v) for v in parts[1:4])
                odom.append(OdomRecord(x, y, th, float(parts[7])))
            elif tag == "FLASER":
                k = int(parts[1])
                ranges = np.array(parts[2:2 + k], dtype=float)
                if ranges.size != k:
                    raise ValueError("truncated range list")
                p = [float(v) for v in parts[2 + k:8 + k]]
                ts = float(parts[8 + k])
                laser.append(LaserRecord(ranges, tuple(p[0:3]), tuple(p[3:6]), ts))
        except (IndexError, ValueError) as exc:
            raise ValueError(f"line {n}: malformed {tag} record ({exc})") from None
    return odom, laser


def read_carmen(path):
    with open(path) as fh:
        return parse_carmen(fh)


def carmen_angles(count: int, fov: float = math.pi) -> np.ndarray:
    """Beam angles of an ``FLASER`` record: evenly spread over ``fov``
    centred on the robot heading (CARMEN's default is 180 degrees)."""
    if count == 1:
        return np.zeros(1)
    return np.linspace(-fov / 2, fov / 2, count)


def carmen_replay(laser: list[LaserRecord], max_range: float, fov: float = math.pi):
    """Yield ``(timestamp, OdometryDelta, LidarScan)`` per laser record, the
    delta being the body-frame odometry motion since the previous record."""
    from .simulator import relative_delta

    prev = None
    for rec in laser:
        delta = OdometryDelta() if prev is None else relative_delta(prev, rec.odom)
        prev = rec.odom
        r = np.clip(rec.ranges, 0.0, max_range)
        yield rec.timestamp, delta, LidarScan(carmen_angles(r.size, fov), r, max_range)


# -- belief snapshots ------------------------------------------------------------

SNAPSHOT_MAGIC = b"BGT1"
_HEADER = struct.Struct("<4sIIId")


def write_snapshot(belief: BeliefTensor, path) -> None:
    """Little-endian header (magic, W, H, channels, theta) followed by
    float32 values in channel, row, column order."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(SNAPSHOT_MAGIC, belief.width, belief.height,
                              belief.channels, float(belief.theta)))
        fh.write(np.ascontiguousarray(belief.values, dtype="<f4").tobytes())


def read_snapshot(path, resolution: float = 0.1) -> BeliefTensor:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: too short for a belief snapshot")
    magic, w, h, n, theta = _HEADER.unpack_from(data)
    if magic != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: not a belief snapshot")
    body = data[_HEADER.size:]
    if len(body) != 4 * w * h * n:
        raise ValueError(f"{path}: payload has {len(body)} bytes, expected {4 * w * h * n}")
    vals = np.frombuffer(body, dtype="<f4").reshape(n, h, w).astype(np.float32)
    return BeliefTensor(vals, resolution, theta)


# -- PNG heatmaps ------------------------------------------------------------------

def heatmap(bmap: np.ndarray) -> np.ndarray:
    """Belief map scaled by its own maximum to 8-bit gray."""
    bmap = np.asarray(bmap, dtype=float)
    peak = float(bmap.max()) if bmap.size else 0.0
    if peak <= 0:
        return np.zeros(bmap.shape, dtype=np.uint8)
    return np.clip(np.rint(bmap / peak * 255), 0, 255).astype(np.uint8)


def colorize(gray: np.ndarray, occupied: np.ndarray | None = None, cmap: str = "viridis"):
    """Apply a perceptual colormap; obstacles (if given) are drawn white."""
    from matplotlib import colormaps

    rgb = (colormaps[cmap](gray / 255.0)[..., :3] * 255).round().astype(np.uint8)
    if occupied is not None:
        rgb[occupied] = 255
    return rgb


def save_belief_png(belief_or_map, path, *, occupied=None, color: bool = True) -> None:
    from PIL import Image

    bmap = belief_map(belief_or_map) if isinstance(belief_or_map, BeliefTensor) else belief_or_map
    gray = heatmap(bmap)
    img = Image.fromarray(colorize(gray, occupied) if color else gray)
    img.save(path)
