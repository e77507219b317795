from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from beliefgrid.floorplans import builtin_map
from beliefgrid.maps import OccupancyMap

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def box_map(width: int, height: int, resolution: float = 0.1, blocks=()) -> OccupancyMap:
    """Empty room (boundary ring only) with optional filled (x0, x1, y0, y1) blocks."""
    occ = np.zeros((height, width), dtype=bool)
    for x0, x1, y0, y1 in blocks:
        occ[y0:y1, x0:x1] = True
    return OccupancyMap(occ, resolution)


def random_map(rng: np.random.Generator, width: int, height: int, density: float = 0.2,
               resolution: float = 0.1) -> OccupancyMap:
    return OccupancyMap(rng.random((height, width)) < density, resolution)


@pytest.fixture(scope="session")
def office():
    return builtin_map("office")


@pytest.fixture(scope="session")
def twin_rooms():
    return builtin_map("twin_rooms")


# -- acceptance report -------------------------------------------------------------

ACCEPTANCE_LINES: dict = {}


def record_criterion(number: int, title: str, ok: bool, detail: str) -> str:
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
