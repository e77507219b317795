"""Compare the numba and numpy backends on the hot kernels.

Usage: python3 benchmarks/bench_kernels.py [--size 128x128x32] [--repeat 20]

Each backend is timed on identical inputs; outputs are checked to agree.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from beliefgrid import kernels
from beliefgrid import observation as obs
from beliefgrid.belief import OdometryDelta, channel_shifts, init_uniform, kernel_activation
from beliefgrid.bench import _kernels, bench_map
from beliefgrid.observation import LikelihoodModel
from beliefgrid.simulator import simulate_scan


def _time(fn, repeat):
    fn()  # compile / warm caches
    ts = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t0)
    return 1e3 * float(np.median(ts))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", default="128x128x32")
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--dtype", default="float32")
    args = ap.parse_args(argv)
    w, h, n = (int(v) for v in args.size.lower().split("x"))
    dt = np.dtype(args.dtype)

    grid = bench_map(w, h)
    kern = _kernels(n, grid.resolution)
    act = kernel_activation(grid, kern, dt)
    belief = init_uniform(grid, n, dt)
    rng = np.random.default_rng(0)
    belief.values *= rng.random(belief.values.shape).astype(dt)
    shifts = channel_shifts(belief, OdometryDelta(0.13, 0.04, 0.02))
    spatial, angular = kern.spatial.astype(dt), kern.angular.astype(dt)
    model = LikelihoodModel(grid)
    j, i = np.argwhere(grid.distance_field().values > 0.5)[0]
    x, y = grid.cell_center(i, j)
    scan = simulate_scan(grid, (float(x), float(y), 0.3), 180, 2 * np.pi, 8.0)
    cells = grid.free_cells()[:2000]

    backends = kernels.available_backends()
    results, outputs = {}, {}
    for be in backends:
        scratch = np.empty_like(belief.values)
        out = np.empty_like(belief.values)

        def motion():
            be.motion_pass(belief.values, grid.free, shifts, spatial, 3, scratch)

        def angular_():
            be.angular_pass(scratch, angular, act.inverse, 3, out)

        motion()
        angular_()
        outputs[be.NAME] = out.copy()
        row = {"motion_pass": _time(motion, args.repeat), "angular_pass": _time(angular_, args.repeat)}
        saved = obs.backend
        obs.backend = be
        try:
            row["loglik_cells"] = _time(lambda: model.loglik_cells(cells, np.zeros(1), scan), args.repeat)
        finally:
            obs.backend = saved
        results[be.NAME] = row

    print(f"tensor {w}x{h}x{n} {dt.name}, median of {args.repeat} runs (ms)")
    names = list(results)
    print(f"{'kernel':<14s}" + "".join(f"{nm:>12s}" for nm in names)
          + ("   speedup" if len(names) == 2 else ""))
    for k in results[names[0]]:
        vals = [results[nm][k] for nm in names]
        line = f"{k:<14s}" + "".join(f"{v:12.3f}" for v in vals)
        if len(vals) == 2:
            line += f"   {vals[1] / vals[0]:6.1f}x"
        print(line)
    if len(outputs) == 2:
        a, b = outputs.values()
        print(f"max |numba - numpy| after one step: {float(np.max(np.abs(a - b))):.3g}")


if __name__ == "__main__":
    main()
