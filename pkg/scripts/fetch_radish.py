"""Fetch or import an occupancy map (e.g. the ACES3 map from the Radish
repository) and store it as a PGM that ``beliefgrid`` can load.

No download location is built in: pass the URL or local path of the map
image you obtained yourself.

    python3 scripts/fetch_radish.py SOURCE --name aces3 [--out maps/] [--threshold 250]

Afterwards ``BELIEFGRID_ACES3=maps/aces3.pgm`` enables the ACES3 part of the
difficulty acceptance check.
"""

from __future__ import annotations

import argparse
import sys
import urllib.request
from pathlib import Path

from beliefgrid.maps import load_map, write_pgm


def read_source(src: str) -> bytes:
    if "://" in src:
        with urllib.request.urlopen(src, timeout=60) as resp:
            return resp.read()
    return Path(src).read_bytes()


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description="import an occupancy map image as PGM")
    ap.add_argument("source", help="URL or local path of a PGM/PNG map image")
    ap.add_argument("--name", required=True)
    ap.add_argument("--out", default="maps")
    ap.add_argument("--threshold", type=int, default=250)
    ap.add_argument("--resolution", type=float, default=0.1)
    args = ap.parse_args(argv)
    try:
        grid = load_map(read_source(args.source), args.threshold, args.resolution)
    except (OSError, ValueError) as exc:
        print(f"fetch_radish: {exc}", file=sys.stderr)
        return 1
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{args.name}.pgm"
    write_pgm(grid, path)
    print(f"wrote {path} ({grid.width}x{grid.height}, {grid.free_count} free cells)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
