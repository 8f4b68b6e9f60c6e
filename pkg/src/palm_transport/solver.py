"""Site-optimal and center-optimal Gale-Shapley iteration on atomic measures.

Each stage runs two sweeps over a candidate pair list:

* application: every site fills its closest shells of centers with weight 1
  (minus what was already rejected) until one unit of mass is applied; the
  boundary shell is filled fractionally;
* rejection: every center keeps applications from its closest shells up to
  one unit of incoming mass and rejects the rest, fractionally on its
  boundary shell.

The limit ``A - R`` is the site-optimal density.  Swapping the roles of the two
measures gives the center-optimal density.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import kernels
from .density import ConstrainedDensity
from .measures import AtomicMeasure

log = logging.getLogger(__name__)

DENSITY_CAP = "density_cap"
COUNTING_CAP = "counting_cap"


class NotConvergedError(RuntimeError):
    pass


@dataclass
class SolveOptions:
    convergence_tol: float = 1e-12
    max_stages: int = 10_000
    constraint_mode: str = DENSITY_CAP
    mass_eps: float = 1e-11
    initial_radius: Optional[float] = None
    backend: Optional[str] = None
    fast_forward: bool = True

    def __post_init__(self):
        if self.constraint_mode in ("density", "density_cap"):
            self.constraint_mode = DENSITY_CAP
        elif self.constraint_mode in ("counting", "counting_cap"):
            self.constraint_mode = COUNTING_CAP
        else:
            raise ValueError(f"unknown constraint mode {self.constraint_mode!r}")
        if self.convergence_tol <= 0 or self.max_stages < 1:
            raise ValueError("convergence_tol must be positive and max_stages >= 1")

    @classmethod
    def from_dict(cls, spec: Optional[dict]) -> "SolveOptions":
        spec = dict(spec or {})
        known = {k: spec[k] for k in cls.__dataclass_fields__ if k in spec}
        return cls(**known)


class PairStructure:
    """Candidate (site, center) pairs within a cutoff radius.

    Pairs are stored site-major, sorted by (site, distance, center), with a
    permutation giving the center-major order (center, distance, site).
    Shell starts mark tie classes of distances within ``tol``.
    """

    def __init__(self, sites: AtomicMeasure, centers: AtomicMeasure, radius: float):
        geom = sites.geometry
        if geom != centers.geometry:
            raise ValueError("site and center measures live in different geometries")
        self.geometry = geom
        self.n_sites = len(sites)
        self.n_centers = len(centers)
        self.tol = geom.shell_tolerance(sites.positions, centers.positions)
        self.max_distance = geom.max_distance(np.vstack([sites.positions, centers.positions]))
        self.complete = bool(radius >= self.max_distance)
        self.radius = np.inf if self.complete else float(radius)
        self.limit = np.inf if self.complete else self.radius - 2.0 * self.tol

        X, Y = sites.positions, centers.positions
        m = self.n_centers
        block = max(1, 4_000_000 // max(m, 1))
        ii_parts, jj_parts, dd_parts = [], [], []
        for start in range(0, self.n_sites, block):
            D = geom.pairwise(X[start:start + block], Y)
            if not self.complete:
                D[D > self.radius] = np.inf
            # stable row sort orders each site's pairs by (distance, center)
            order = np.argsort(D, axis=1, kind="stable")
            Ds = np.take_along_axis(D, order, axis=1)
            if self.complete:
                keep = np.ones(D.shape, dtype=bool)
            else:
                keep = np.isfinite(Ds)
            rows, cols = np.nonzero(keep)
            ii_parts.append(rows.astype(np.int64) + start)
            jj_parts.append(order[rows, cols].astype(np.int64))
            dd_parts.append(Ds[rows, cols])
        self.i = np.concatenate(ii_parts)
        self.j = np.concatenate(jj_parts)
        self.dist = np.ascontiguousarray(np.concatenate(dd_parts))
        self.nnz = len(self.dist)

        self.site_ptr = np.zeros(self.n_sites + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.i, minlength=self.n_sites), out=self.site_ptr[1:])
        self.shell_start_s = _shell_starts(self.i, self.dist, self.tol)

        # lexsort is stable and pairs are already site-ordered: (center, distance, site)
        self.perm = np.lexsort((self.dist, self.j)).astype(np.int64)
        self.center_ptr = np.zeros(self.n_centers + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.j, minlength=self.n_centers), out=self.center_ptr[1:])
        self.shell_start_c = _shell_starts(self.j[self.perm], self.dist[self.perm], self.tol)

        self.w_pair = np.ascontiguousarray(centers.weights[self.j])
        self.u_pair_c = np.ascontiguousarray(sites.weights[self.i[self.perm]])
        self._backend_cache = {}

    def keys(self) -> np.ndarray:
        return self.i * self.n_centers + self.j

    def remap(self, old: "PairStructure", values: np.ndarray) -> np.ndarray:
        """Carry per-pair values from a smaller structure into this one (new pairs get 0)."""
        new_keys = self.keys()
        order = np.argsort(new_keys)
        pos = order[np.searchsorted(new_keys[order], old.keys())]
        out = np.zeros(self.nnz)
        out[pos] = values
        return out


def _shell_starts(owner: np.ndarray, dist: np.ndarray, tol: float) -> np.ndarray:
    start = np.ones(len(dist), dtype=np.uint8)
    if len(dist) > 1:
        same_owner = owner[1:] == owner[:-1]
        start[1:] = ~(same_owner & (np.diff(dist) <= tol))
    return start


def _initial_radius(sites: AtomicMeasure, centers: AtomicMeasure, target_mass: float = 2.5) -> float:
    """Radius of a ball holding about ``target_mass`` of center mass on average."""
    geom = sites.geometry
    vol = geom.volume()
    if vol is None:
        pts = np.vstack([sites.positions, centers.positions])
        ext = pts.max(axis=0) - pts.min(axis=0)
        ext = np.where(ext > 0, ext, 1.0)
        vol = float(np.prod(ext))
    intensity = max(centers.total_mass / vol, 1e-300)
    d = geom.dimension
    unit_ball = math.pi ** (d / 2) / math.gamma(d / 2 + 1)
    return 1.25 * (target_mass / (intensity * unit_ball)) ** (1.0 / d)


@dataclass
class StageState:
    """Per-stage functions of the iteration, on the candidate pairs of ``structure``."""

    stage: int
    structure: PairStructure
    A: np.ndarray
    R: np.ndarray
    a: np.ndarray
    r: np.ndarray
    c: np.ndarray
    c_prime: np.ndarray
    R_prev: Optional[np.ndarray] = None

    def dense(self, name: str) -> np.ndarray:
        """Dense (sites x centers) copy of ``A``, ``R`` or ``R_prev``."""
        ps = self.structure
        out = np.zeros((ps.n_sites, ps.n_centers))
        out[ps.i, ps.j] = getattr(self, name)
        return out


@dataclass
class SolveResult:
    density: ConstrainedDensity
    stages_run: int
    residual: float
    converged: bool
    g_inf: np.ndarray
    h_inf: np.ndarray
    final_state: Optional[StageState] = field(default=None, repr=False)
    expansions: int = 0
    sweeps: int = 0

    def summary(self) -> dict:
        return {
            "stages_run": int(self.stages_run),
            "sweeps": int(self.sweeps),
            "residual": float(self.residual),
            "converged": bool(self.converged),
            "role_swap": bool(self.density.role_swap),
            "per_site_g": [float(v) for v in self.g_inf],
            "per_center_h": [float(v) for v in self.h_inf],
        }


def _caps(weights: np.ndarray, mode: str) -> np.ndarray:
    if mode == COUNTING_CAP:
        return 1.0 / weights
    return np.ones(len(weights))


def application_step(ps: PairStructure, R_prev: np.ndarray, cap_pair: np.ndarray,
                     eps: float = 1e-11, backend: Optional[str] = None):
    """One full application sweep from scratch: returns ``(A, a, c, need_expand)``."""
    A = np.zeros(ps.nnz)
    a = np.full(ps.n_sites, np.inf)
    c = np.ones(ps.n_sites)
    a_end = ps.site_ptr[1:].copy()
    need = np.zeros(ps.n_sites, dtype=np.uint8)
    changed = np.zeros(ps.n_centers, dtype=np.uint8)
    active = np.arange(ps.n_sites, dtype=np.int64)
    kernels.application_update(ps, cap_pair, np.ascontiguousarray(R_prev, dtype=float), A, a, c, a_end,
                               active, eps, changed, need, backend=backend)
    return A, a, c, need


def rejection_step(ps: PairStructure, A: np.ndarray, eps: float = 1e-11,
                   backend: Optional[str] = None):
    """One full rejection sweep: returns ``(R, r, c_prime)``."""
    R = np.zeros(ps.nnz)
    r = np.full(ps.n_centers, np.inf)
    cp = np.zeros(ps.n_centers)
    changed = np.zeros(ps.n_sites, dtype=np.uint8)
    active = np.arange(ps.n_centers, dtype=np.int64)
    kernels.rejection_update(ps, np.ascontiguousarray(A, dtype=float), R, r, cp, active, eps, changed,
                             backend=backend)
    return R, r, cp


def _rows(ptr: np.ndarray, owners: np.ndarray) -> np.ndarray:
    """Pair indices of the given owners' rows, concatenated."""
    if len(owners) == 0:
        return np.zeros(0, dtype=np.int64)
    lo, hi = ptr[owners], ptr[owners + 1]
    counts = hi - lo
    offsets = np.repeat(lo - np.cumsum(counts) + counts, counts)
    return offsets + np.arange(counts.sum(), dtype=np.int64)


def _crawl_jump(ps, A, R, cap_pair, idx, dA, eps) -> int:
    """Skip ahead through a stretch of stages in which only dead pairs move.

    A site whose boundary shell is fully rejected by centers that will never
    take it back re-applies its small deficit ``delta`` there each stage; A and
    R rise together, nothing else changes, and the shell's open mass ``S``
    drops by exactly ``delta`` per stage while each pair keeps its share of
    ``S``.  That is solved in closed form for ``k`` stages, stopping a couple
    of stages before any shell is used up.  Returns ``k`` (0: no jump).
    """
    moving = dA > 0
    pairs = idx[moving]
    w = ps.w_pair[pairs]
    owner = ps.i[pairs]
    sites, inv = np.unique(owner, return_inverse=True)
    gap = cap_pair[pairs] - A[pairs]
    S = np.bincount(inv, weights=gap * w, minlength=len(sites))
    delta = np.bincount(inv, weights=dA[moving] * w, minlength=len(sites))
    if np.any(delta <= 0):
        return 0
    k = int(np.min(np.floor((S - delta - 2 * eps) / delta))) - 2
    if k < 2:
        return 0
    shrink = (S - k * delta) / S
    A[pairs] = cap_pair[pairs] - gap * shrink[inv]
    R[pairs] = A[pairs]
    return k


def run_stages(sites: AtomicMeasure, centers: AtomicMeasure, opts: SolveOptions,
               cap_center: np.ndarray, on_stage: Optional[Callable[[StageState], None]] = None):
    """Iterate from ``R_0 = 0`` until the sup-norm change of (A, R) is below tolerance.

    Only sites whose rejections changed re-apply, and only centers whose
    applications changed re-reject; the others would reproduce their rows.
    ``max_stages`` bounds the sweeps actually computed; the returned stage
    index also counts stages skipped by ``_crawl_jump``.
    """
    if len(sites) == 0 or len(centers) == 0:
        raise ValueError("both measures must be nonempty")
    radius = opts.initial_radius or _initial_radius(sites, centers)
    ps = PairStructure(sites, centers, radius)
    n, m = ps.n_sites, ps.n_centers
    A = np.zeros(ps.nnz)
    R = np.zeros(ps.nnz)
    a = np.zeros(n)
    c = np.ones(n)
    r = np.full(m, np.inf)
    cp = np.zeros(m)
    a_end = ps.site_ptr[:-1].copy()
    cap_pair = np.ascontiguousarray(cap_center[ps.j])
    active_sites = np.arange(n, dtype=np.int64)
    expansions = 0
    residual = np.inf
    stage = 0
    fixed = False
    prev_dA = None
    for sweep in range(1, opts.max_stages + 1):
        stage += 1
        R_prev = R.copy() if on_stage is not None else None
        watch = opts.fast_forward and len(active_sites) < n
        if watch:
            idx = _rows(ps.site_ptr, active_sites)
            A0, R0, a0 = A[idx], R[idx], a[active_sites]
        changed_c = np.zeros(m, dtype=np.uint8)
        need = np.zeros(n, dtype=np.uint8)
        change_a = kernels.application_update(ps, cap_pair, R, A, a, c, a_end, active_sites, opts.mass_eps,
                                              changed_c, need, backend=opts.backend)
        while need.any():
            watch = False
            redo = np.nonzero(need)[0].astype(np.int64)
            bigger = PairStructure(sites, centers, 2.0 * ps.radius)
            log.debug("stage %d: %d sites outgrew radius %.4g, expanding", stage, len(redo), ps.radius)
            A, R = bigger.remap(ps, A), bigger.remap(ps, R)
            if R_prev is not None:
                R_prev = bigger.remap(ps, R_prev)
            a_end = bigger.site_ptr[1:].copy()
            ps = bigger
            cap_pair = np.ascontiguousarray(cap_center[ps.j])
            expansions += 1
            need[:] = 0
            change_a = max(change_a, kernels.application_update(
                ps, cap_pair, R, A, a, c, a_end, redo, opts.mass_eps, changed_c, need, backend=opts.backend))
        active_centers = np.nonzero(changed_c)[0].astype(np.int64)
        if watch:
            r0, cp0 = r[active_centers], cp[active_centers]
        changed_s = np.zeros(n, dtype=np.uint8)
        change_r = kernels.rejection_update(ps, A, R, r, cp, active_centers, opts.mass_eps, changed_s,
                                            backend=opts.backend)
        residual = float(max(change_a, change_r))
        started = active_sites
        active_sites = np.nonzero(changed_s)[0].astype(np.int64)
        if on_stage is not None:
            on_stage(StageState(stage, ps, A.copy(), R.copy(), a.copy(), r.copy(), c.copy(), cp.copy(),
                                R_prev=R_prev))
        # no rejection changed: the next stage would reproduce this one
        fixed = len(active_sites) == 0
        if fixed or residual <= opts.convergence_tol:
            break
        dA = None
        if watch and np.array_equal(started, active_sites):
            dA = A[idx] - A0
            # a pure crawl: only dead pairs moved, and by the same amounts as last stage
            crawl = (np.array_equal(dA, R[idx] - R0) and np.array_equal(a0, a[active_sites])
                     and np.array_equal(r0, r[active_centers]) and np.array_equal(cp0, cp[active_centers])
                     and prev_dA is not None and len(prev_dA) == len(dA)
                     and np.array_equal(prev_dA > 0, dA > 0))
            if crawl:
                skipped = _crawl_jump(ps, A, R, cap_pair, idx, dA, opts.mass_eps)
                if skipped:
                    log.debug("stage %d: skipping %d crawl stages", stage, skipped)
                    stage += skipped
                    dA = None
        prev_dA = dA
    state = StageState(stage, ps, A, R, a, r, c, cp)
    return state, stage, residual, fixed or residual <= opts.convergence_tol, expansions, sweep


def _result(sites, centers, opts, cap_center, on_stage, role_swap, phi, psi):
    state, stages, residual, converged, expansions, sweeps = run_stages(sites, centers, opts, cap_center, on_stage)
    ps = state.structure
    f = state.A - state.R
    if role_swap:
        dens = ConstrainedDensity(ps.j, ps.i, f, phi, psi, role_swap=True,
                                  cap=cap_center if opts.constraint_mode == COUNTING_CAP else None)
    else:
        dens = ConstrainedDensity(ps.i, ps.j, f, phi, psi, role_swap=False, cap=cap_center)
    if not converged:
        log.warning("no convergence after %d stages (residual %.3g)", stages, residual)
    return SolveResult(dens, stages, residual, converged, dens.row_sums(), dens.col_sums(),
                       final_state=state, expansions=expansions, sweeps=sweeps)


def solve_site_optimal(phi: AtomicMeasure, psi: AtomicMeasure, opts: Optional[SolveOptions] = None,
                       on_stage: Optional[Callable[[StageState], None]] = None) -> SolveResult:
    """Site-optimal density ``f_s = A - R`` for sites ``phi`` and centers ``psi``."""
    opts = opts or SolveOptions()
    if phi.geometry != psi.geometry:
        raise ValueError("site and center measures live in different geometries")
    cap = _caps(psi.weights, opts.constraint_mode)
    return _result(phi, psi, opts, cap, on_stage, False, phi, psi)


def solve_center_optimal(phi: AtomicMeasure, psi: AtomicMeasure, opts: Optional[SolveOptions] = None,
                         on_stage: Optional[Callable[[StageState], None]] = None) -> SolveResult:
    """Center-optimal density: the same iteration with centers proposing, indexed (site, center)."""
    opts = opts or SolveOptions()
    if phi.geometry != psi.geometry:
        raise ValueError("site and center measures live in different geometries")
    if opts.constraint_mode == COUNTING_CAP:
        # the cap belongs to the original centers, which now propose
        raise NotImplementedError("counting_cap is defined for the site-optimal iteration only")
    cap = np.ones(len(phi))
    return _result(psi, phi, opts, cap, on_stage, True, phi, psi)


def solve(phi, psi, opts=None, center_optimal: bool = False, strict: bool = False, on_stage=None) -> SolveResult:
    fn = solve_center_optimal if center_optimal else solve_site_optimal
    res = fn(phi, psi, opts, on_stage)
    if strict and not res.converged:
        raise NotConvergedError(f"no convergence after {res.stages_run} stages (residual {res.residual:.3g})")
    return res
