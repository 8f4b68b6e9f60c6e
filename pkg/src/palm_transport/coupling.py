"""Extra-head sampling and Palm statistics on the torus.

A balancing density between a (rescaled) Lebesgue grid and a random
measure tells the grid site at the origin where to send its unit of mass;
shifting the realization so that the chosen atom sits at the origin gives a
sample of the Palm version.  For Poisson input the Palm version is the
process plus an atom at the origin, which the experiment checks.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .density import ConstrainedDensity
from .geometry import Geometry, translate
from .measures import AtomicMeasure, grid_lebesgue, make_measure
from .solver import SolveOptions, solve_site_optimal
from .transport import PreconditionError

ROW_TOL = 1e-9


class CouplingError(RuntimeError):
    """The density cannot drive the extra-head scheme (mass deficit at the origin)."""


@dataclass
class CouplingSample:
    seed: Optional[int]
    psi: AtomicMeasure
    origin_index: int          # site (or center, for the reverse scheme) nearest the origin
    origin_offset: float       # its distance from the origin
    chosen: int                # atom whose position is the shift vector
    shift: np.ndarray
    shifted: AtomicMeasure

    def origin_is_atom(self) -> bool:
        return bool(np.any(np.all(self.shifted.positions == 0.0, axis=1)))


@dataclass
class PalmStatistics:
    radii: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    samples: int
    dropped: int = 0
    origin_hits: int = 0
    log: list = field(default_factory=list, repr=False)

    @property
    def reportable(self) -> bool:
        total = self.samples + self.dropped
        return total > 0 and self.dropped < 0.01 * total

    def to_dict(self) -> dict:
        return {"radii": self.radii.tolist(), "mean": self.mean.tolist(), "stderr": self.stderr.tolist(),
                "samples": self.samples, "dropped": self.dropped, "origin_hits": self.origin_hits,
                "reportable": self.reportable, "log": self.log}

    def to_csv(self) -> str:
        lines = ["radius,mean,stderr"]
        lines += [f"{float(r)!r},{float(m)!r},{float(s)!r}" for r, m, s in zip(self.radii, self.mean, self.stderr)]
        return "\n".join(lines) + "\n"


def _origin(geom: Geometry) -> np.ndarray:
    return np.zeros(geom.dimension)


def _draw(weights: np.ndarray, rng) -> int:
    p = weights / weights.sum()
    return int(rng.choice(len(p), p=p))


def sample_extra_head(f: ConstrainedDensity, rng, seed: Optional[int] = None) -> CouplingSample:
    """Pick the grid site nearest the origin and draw its destination center."""
    phi, psi = f.phi, f.psi
    geom = phi.geometry
    i0 = phi.nearest_atom(_origin(geom))
    cj, v = f.row(i0)
    probs = v * psi.weights[cj]
    total = probs.sum()
    if total < 1.0 - ROW_TOL:
        raise CouplingError(f"site {i0} nearest the origin sends only {total!r}; deficit {1.0 - total:.3g}")
    j = int(cj[_draw(probs, rng)])
    Y = psi.positions[j].copy()
    offset = float(geom.distance(phi.positions[i0], _origin(geom)))
    return CouplingSample(seed, psi, int(i0), offset, j, Y, translate(psi, Y))


def reverse_extra_head(f: ConstrainedDensity, rng, seed: Optional[int] = None) -> CouplingSample:
    """Pick the center nearest the origin and draw one of the sites feeding it."""
    phi, psi = f.phi, f.psi
    geom = phi.geometry
    j0 = psi.nearest_atom(_origin(geom))
    si, v = f.column(j0)
    probs = v * phi.weights[si]
    total = probs.sum()
    if total < 1.0 - ROW_TOL:
        raise CouplingError(f"center {j0} nearest the origin receives only {total!r}; deficit {1.0 - total:.3g}")
    i = int(si[_draw(probs, rng)])
    Y = phi.positions[i].copy()
    offset = float(geom.distance(psi.positions[j0], _origin(geom)))
    return CouplingSample(seed, psi, int(j0), offset, i, Y, translate(psi, Y))


def counts_around_origin(sample: CouplingSample, radii) -> np.ndarray:
    """Atoms of the shifted measure within each radius of 0, the chosen atom excluded."""
    shifted = sample.shifted
    d = shifted.distances_from(_origin(shifted.geometry))
    d = np.delete(d, sample.chosen)
    return np.array([np.count_nonzero(d <= r) for r in radii], dtype=float)


def worker_count(requested: Optional[int] = None) -> int:
    cap = os.environ.get("PALM_TRANSPORT_THREADS")
    n = requested or os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def _aggregate(radii, rows, dropped, hits, log) -> PalmStatistics:
    radii = np.asarray(radii, dtype=float)
    if rows:
        C = np.vstack(rows)
        mean = C.mean(axis=0)
        se = C.std(axis=0, ddof=1) / math.sqrt(len(C)) if len(C) > 1 else np.full(len(radii), np.inf)
    else:
        mean = np.full(len(radii), np.nan)
        se = np.full(len(radii), np.nan)
    return PalmStatistics(radii, mean, se, len(rows), dropped, hits, log)


def _torus(period, dimension: int) -> Geometry:
    if np.ndim(period) == 0:
        period = [float(period)] * dimension
    return Geometry.torus(period)


def slivnyak_experiment(intensity: float = 1.0, period=10.0, resolution: int = 100, samples: int = 500,
                        radii: Sequence[float] = (1.0,), seed: int = 0, dimension: int = 2,
                        opts: Optional[SolveOptions] = None, workers: Optional[int] = None,
                        psi_spec: Optional[dict] = None) -> PalmStatistics:
    """Extra-head samples of a Poisson process, counted around the origin.

    Sample ``k`` uses seed ``seed + k`` for the realization and for the draw,
    so results do not depend on the number of workers.  Non-converged solves
    are dropped and counted.
    """
    geom = _torus(period, dimension)
    radii = np.asarray(radii, dtype=float)
    if radii.max() > geom.period_array.min() / 4.0 + 1e-12:
        raise PreconditionError("largest radius must be at most a quarter of the period")
    opts = opts or SolveOptions()
    vol = geom.volume()
    base = dict(psi_spec or {"type": "poisson", "intensity": intensity})

    def one(k: int):
        s = seed + k
        psi = make_measure({**base, "seed": s}, geom)
        if len(psi) == 0:
            return None, {"seed": s, "dropped": "empty realization"}
        phi = grid_lebesgue(geom, resolution=resolution, scale=psi.total_mass / vol)
        res = solve_site_optimal(phi, psi, opts)
        if not res.converged:
            return None, {"seed": s, "dropped": f"no convergence (residual {res.residual:.3g})"}
        try:
            smp = sample_extra_head(res.density, np.random.default_rng([s, 1]), seed=s)
        except CouplingError as exc:
            return None, {"seed": s, "dropped": str(exc)}
        counts = counts_around_origin(smp, radii)
        return (counts, smp.origin_is_atom()), {"seed": s, "atoms": len(psi), "stages": res.stages_run,
                                                "shift": smp.shift.tolist(), "counts": counts.tolist()}

    with ThreadPoolExecutor(max_workers=worker_count(workers)) as pool:
        results = list(pool.map(one, range(samples)))
    rows, log, dropped, hits = [], [], 0, 0
    for out, entry in results:
        log.append(entry)
        if out is None:
            dropped += 1
            continue
        rows.append(out[0])
        hits += int(out[1])
    return _aggregate(radii, rows, dropped, hits, log)


def poisson_palm_direct(intensity: float = 1.0, period=10.0, samples: int = 500, radii=(1.0,),
                        seed: int = 0, dimension: int = 2) -> PalmStatistics:
    """Reference statistics: a Poisson realization with an atom added at the origin."""
    geom = _torus(period, dimension)
    radii = np.asarray(radii, dtype=float)
    P = geom.period_array
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(samples):
        n = rng.poisson(intensity * geom.volume())
        pts = rng.uniform(size=(n, dimension)) * P
        d = geom.distance(pts, np.zeros((1, dimension))) if n else np.zeros(0)
        rows.append(np.array([np.count_nonzero(d <= r) for r in radii], dtype=float))
    return _aggregate(radii, rows, 0, samples, [])


def spatial_averages(f: ConstrainedDensity):
    """Site-weighted mean outgoing mass and center-weighted mean incoming mass."""
    u, w = f.phi.weights, f.psi.weights
    g, h = f.row_sums(), f.col_sums()
    return math.fsum(u * g) / math.fsum(u), math.fsum(w * h) / math.fsum(w)


def coupling_cases_check(f: ConstrainedDensity, tol: float = 1e-9) -> dict:
    """Unexhausted site mass and unsated center mass against the total-mass gap.

    With equal total masses both should vanish; otherwise the lighter side is
    fully used and the heavier side is left with (about) the mass gap.
    """
    u, w = f.phi.weights, f.psi.weights
    g, h = f.row_sums(), f.col_sums()
    site_deficit = math.fsum(u * (1.0 - g))
    center_deficit = math.fsum(w * (1.0 - h))
    gap = math.fsum(w) - math.fsum(u)
    unexhausted = math.fsum(u[g < 1.0 - tol])
    unsated = math.fsum(w[h < 1.0 - tol])
    scale = max(math.fsum(u), math.fsum(w))
    small = 1e-6 * scale
    if site_deficit <= small and center_deficit <= small:
        case = "equal"
    elif site_deficit <= small:
        case = "centers left over"
    elif center_deficit <= small:
        case = "sites left over"
    else:
        case = "both left over"
    return {"case": case, "unexhausted_mass": unexhausted, "unsated_mass": unsated,
            "site_deficit": site_deficit, "center_deficit": center_deficit,
            "predicted_gap": abs(gap), "deficit_gap_error": abs(abs(center_deficit - site_deficit) - abs(gap))}
