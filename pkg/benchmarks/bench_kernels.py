"""Time the compiled and numpy stage kernels on the same instances.

Usage::

    python benchmarks/bench_kernels.py [--repeat 3] [--quick]

Each instance is solved once per backend per repeat; the best wall time is
reported together with the speedup and a bitwise comparison of the two
densities.
"""
import argparse
import time

import numpy as np

from palm_transport import kernels
from palm_transport.geometry import Geometry
from palm_transport.measures import grid_lebesgue, make_measure
from palm_transport.solver import SolveOptions, solve_site_optimal


def interval(res):
    g = Geometry.euclidean(1)
    grid = make_measure({"type": "grid_lebesgue", "window": [[0.0, 2.0]], "resolution": res}, g)
    return grid, grid


def circle(res):
    g = Geometry.torus([11.0])
    return grid_lebesgue(g, resolution=res), make_measure({"type": "lattice", "spacing": 1.0}, g)


def poisson_plane(res):
    g = Geometry.torus([10.0, 10.0])
    psi = make_measure({"type": "poisson", "intensity": 1.0, "seed": 3}, g)
    return grid_lebesgue(g, resolution=res, scale=psi.total_mass / g.volume()), psi


INSTANCES = {
    "interval": (interval, 400, 1000),
    "circle": (circle, 1100, 4400),
    "poisson-plane": (poisson_plane, 50, 100),
}


def best_time(phi, psi, backend, repeat):
    best, res = np.inf, None
    for _ in range(repeat):
        t = time.perf_counter()
        res = solve_site_optimal(phi, psi, SolveOptions(backend=backend))
        best = min(best, time.perf_counter() - t)
    return best, res


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--quick", action="store_true", help="smaller resolutions only")
    args = ap.parse_args(argv)
    backends = kernels.available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; timing the numpy backend only")
    print(f"{'instance':<22}{'stages':>8}" + "".join(f"{b + ' [s]':>16}" for b in backends)
          + f"{'speedup':>10}{'identical':>11}")
    for name, (build, small, large) in INSTANCES.items():
        for res in (small,) if args.quick else (small, large):
            phi, psi = build(res)
            times, outs = {}, {}
            for b in backends:
                times[b], outs[b] = best_time(phi, psi, b, args.repeat)
            stages = next(iter(outs.values())).stages_run
            row = f"{f'{name} ({res})':<22}{stages:>8}" + "".join(f"{times[b]:>16.3f}" for b in backends)
            if len(backends) == 2:
                same = np.array_equal(outs["python"].density.values, outs["compiled"].density.values)
                row += f"{times['python'] / times['compiled']:>9.1f}x{str(same):>11}"
            print(row, flush=True)


if __name__ == "__main__":
    main()
