"""Synthetic floorplans shipped with the package (0.1 m per cell).

``office``     an irregular office: every place looks different.
``twin_rooms`` two identical rooms, each reached through an identical bent
               vestibule from a shared corridor that is not symmetric, so a
               robot can only tell the rooms apart after visiting the
               corridor.

Regenerate the PGM files with ``python -m beliefgrid.floorplans``.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from .maps import OccupancyMap, read_map, write_pgm

RESOLUTION = 0.1

# twin-room geometry, in cells
TWIN_OFFSET = 72          # room B = room A shifted right by this many cells
TWIN_ROOM_X = (2, 74)     # left edge of each room interior
TWIN_ROOM_W = 68
TWIN_ROOM_H = 60          # interior rows [2, 62)
TWIN_CORRIDOR = (32, 114, 87, 97)  # x0, x1, y0, y1


def _carve(occ, x0, x1, y0, y1):
    occ[y0:y1, x0:x1] = False


def _fill(occ, x0, x1, y0, y1):
    occ[y0:y1, x0:x1] = True


def _disc(occ, cx, cy, r):
    h, w = occ.shape
    jj, ii = np.mgrid[0:h, 0:w]
    occ[(ii + 0.5 - cx) ** 2 + (jj + 0.5 - cy) ** 2 <= r * r] = True


def office_grid() -> np.ndarray:
    """120 x 90 cells: three rooms of different sizes with irregular doors
    and furniture."""
    w, h = 120, 90
    occ = np.ones((h, w), dtype=bool)
    _carve(occ, 2, w - 2, 2, h - 2)

    # west wing wall with two doors
    _fill(occ, 44, 46, 2, h - 2)
    _carve(occ, 44, 46, 14, 26)
    _carve(occ, 44, 46, 61, 73)
    # east side split into north and south rooms
    _fill(occ, 46, w - 2, 49, 51)
    _carve(occ, 78, 91, 49, 51)
    _carve(occ, 104, 112, 49, 51)

    # west wing furniture
    _fill(occ, 9, 17, 8, 21)
    _fill(occ, 26, 38, 30, 34)
    _fill(occ, 26, 29, 34, 44)
    _disc(occ, 31.0, 70.0, 3.2)
    _fill(occ, 6, 12, 52, 80)
    _fill(occ, 18, 22, 80, 88)

    # north-east room
    _fill(occ, 56, 70, 10, 16)
    _fill(occ, 62, 66, 16, 30)
    _fill(occ, 88, 92, 2, 20)
    _fill(occ, 100, 114, 30, 36)
    _disc(occ, 80.0, 38.0, 2.5)
    _fill(occ, 108, 118, 8, 12)

    # south-east room
    for k in range(16):
        _fill(occ, 60 + k, 62 + k, 60 + k, 62 + k)   # diagonal partition
    _fill(occ, 94, 106, 62, 66)
    _disc(occ, 100.0, 78.0, 4.0)
    _fill(occ, 112, 118, 70, 88)
    _fill(occ, 48, 54, 80, 88)
    return occ


def twin_rooms_grid() -> np.ndarray:
    """146 x 100 cells. Rooms A and B are identical up to a translation of
    ``TWIN_OFFSET`` cells and connect to the corridor through identical
    dog-leg vestibules; only the corridor breaks the symmetry."""
    w, h = 146, 100
    occ = np.ones((h, w), dtype=bool)
    for x0 in TWIN_ROOM_X:
        _carve(occ, x0, x0 + TWIN_ROOM_W, 2, 2 + TWIN_ROOM_H)
        # furniture, identical in both rooms and not symmetric within a room
        _fill(occ, x0 + 8, x0 + 20, 8, 14)
        _fill(occ, x0 + 40, x0 + 44, 6, 28)
        _fill(occ, x0 + 26, x0 + 34, 36, 40)
        _fill(occ, x0 + 52, x0 + 62, 44, 54)
        _disc(occ, x0 + 16.0, 46.0, 3.0)
        _fill(occ, x0 + 58, x0 + 68, 14, 18)
        # bent vestibule from a door in the bottom wall down to the corridor
        _carve(occ, x0 + 10, x0 + 20, 62, 77)
        _carve(occ, x0 + 10, x0 + 40, 67, 77)
        _carve(occ, x0 + 30, x0 + 40, 77, 87)
    x0, x1, y0, y1 = TWIN_CORRIDOR
    _carve(occ, x0, x1, y0, y1)
    # landmarks that only exist on one side of the corridor
    _fill(occ, 52, 56, 87, 90)
    _fill(occ, 64, 66, 93, 97)
    return occ


GENERATORS = {"office": office_grid, "twin_rooms": twin_rooms_grid}


def builtin_map(name: str) -> OccupancyMap:
    """Load a shipped map by name (``office`` or ``twin_rooms``)."""
    if name not in GENERATORS:
        raise KeyError(f"unknown built-in map {name!r}; choose from {sorted(GENERATORS)}")
    ref = resources.files("beliefgrid") / "data" / f"{name}.pgm"
    with resources.as_file(ref) as path:
        return read_map(path, resolution=RESOLUTION)


def builtin_path(name: str) -> Path:
    if name not in GENERATORS:
        raise KeyError(f"unknown built-in map {name!r}; choose from {sorted(GENERATORS)}")
    return Path(str(resources.files("beliefgrid") / "data" / f"{name}.pgm"))


def mirror_pose(pose):
    """Twin of a world pose in the other room of the twin-room map."""
    shift = TWIN_OFFSET * RESOLUTION
    split = (TWIN_ROOM_X[0] + TWIN_ROOM_W + TWIN_ROOM_X[1]) / 2 * RESOLUTION
    dx = shift if pose[0] < split else -shift
    return (pose[0] + dx, pose[1], pose[2])


def main(out_dir=None) -> None:
    out = Path(out_dir) if out_dir else Path(__file__).parent / "data"
    out.mkdir(parents=True, exist_ok=True)
    for name, gen in GENERATORS.items():
        write_pgm(OccupancyMap(gen(), RESOLUTION), out / f"{name}.pgm")


if __name__ == "__main__":
    main()
