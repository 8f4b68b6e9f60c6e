"""Checks on constrained densities: constraints, balance, stability, profiles.

Everything here takes a :class:`~palm_transport.density.ConstrainedDensity`
and returns plain report objects; violations are data, never exceptions
(except for broken preconditions of the allocation helpers).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .density import ConstrainedDensity
from .measures import AtomicMeasure

STABILITY_TOL = 1e-9

# reason codes used in stability reports
UNEXHAUSTED = "unexhausted"
UNSATED = "unsated"
FARTHER_MASS = "has mass farther away"


class PreconditionError(ValueError):
    """Input does not satisfy the documented precondition of an operation."""


def _dist_tol(f: ConstrainedDensity) -> float:
    return f.geometry.shell_tolerance(f.phi.positions, f.psi.positions)


def _as_index(sel, n: int) -> np.ndarray:
    if sel is None:
        return np.arange(n)
    sel = np.asarray(sel)
    if sel.dtype == bool:
        return np.nonzero(sel)[0]
    return sel.astype(np.int64).reshape(-1)


# ----------------------------------------------------------------- profiles

def g_profile(f: ConstrainedDensity, i: int, t: float = math.inf) -> float:
    """Mass sent by site ``i`` to centers within distance ``t`` (closed ball)."""
    lo, hi = np.searchsorted(f.sites, [i, i + 1])
    d = f.dist[lo:hi]
    keep = d <= t + _dist_tol(f)
    return float(np.sum(f.values[lo:hi][keep] * f.psi.weights[f.centers[lo:hi][keep]]))


def h_profile(f: ConstrainedDensity, j: int, t: float = math.inf) -> float:
    """Mass received by center ``j`` from sites within distance ``t`` (closed ball)."""
    mask = f.centers == j
    keep = mask & (f.dist <= t + _dist_tol(f))
    return float(np.sum(f.values[keep] * f.phi.weights[f.sites[keep]]))


def _grouped_cumulative(owner, dist, contrib, tol):
    """Per-owner running sums evaluated at the end of each distance tie group.

    Entries must be sorted by (owner, dist).  Returns ``(value, is_group_end)``.
    """
    n = len(dist)
    if n == 0:
        return np.zeros(0), np.zeros(0, dtype=bool)
    new_owner = np.ones(n, dtype=bool)
    new_owner[1:] = owner[1:] != owner[:-1]
    csum = np.cumsum(contrib)
    seg_start = np.maximum.accumulate(np.where(new_owner, np.arange(n), 0))
    start_val = (csum - contrib)[seg_start]
    running = csum - start_val
    group_end = np.ones(n, dtype=bool)
    group_end[:-1] = (owner[1:] != owner[:-1]) | (np.diff(dist) > tol)
    return running, group_end


def profile_differences(f1: ConstrainedDensity, f2: ConstrainedDensity, side: str = "site"):
    """``profile(f1) - profile(f2)`` at every breakpoint of either profile.

    ``side='site'`` compares g-profiles per site, ``'center'`` h-profiles per
    center.  Returns ``(owner, radius, difference)`` arrays, one entry per
    (owner, tie group of breakpoints).
    """
    if side == "site":
        own = [f1.sites, f2.sites]
        mass = [f1.values * f1.psi.weights[f1.centers], f2.values * f2.psi.weights[f2.centers]]
    elif side == "center":
        own = [f1.centers, f2.centers]
        mass = [f1.values * f1.phi.weights[f1.sites], f2.values * f2.phi.weights[f2.sites]]
    else:
        raise ValueError("side must be 'site' or 'center'")
    owner = np.concatenate(own)
    dist = np.concatenate([f1.dist, f2.dist])
    contrib = np.concatenate([mass[0], -mass[1]])
    order = np.lexsort((dist, owner))
    owner, dist, contrib = owner[order], dist[order], contrib[order]
    running, end = _grouped_cumulative(owner, dist, contrib, _dist_tol(f1))
    return owner[end], dist[end], running[end]


# -------------------------------------------------------------- constraints

@dataclass
class ConstraintReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"ok": self.ok, "violations": self.violations}


def _excess(values, limit):
    return values - limit - 1e-9 * (1.0 + np.abs(values))


def validate_constrained(f: ConstrainedDensity) -> ConstraintReport:
    """List cap, row and column violations beyond ``1e-9 * (1 + magnitude)``."""
    rep = ConstraintReport()
    neg = np.nonzero(f.values < -1e-9)[0]
    for k in neg:
        rep.violations.append({"kind": "negative", "site": int(f.sites[k]), "center": int(f.centers[k]),
                               "value": float(f.values[k])})
    over = np.nonzero(_excess(f.values, f.cap[f.centers]) > 0)[0]
    for k in over:
        rep.violations.append({"kind": "cap", "site": int(f.sites[k]), "center": int(f.centers[k]),
                               "value": float(f.values[k]),
                               "excess": float(f.values[k] - f.cap[f.centers[k]])})
    rows = f.row_sums()
    for i in np.nonzero(_excess(rows, 1.0) > 0)[0]:
        rep.violations.append({"kind": "row", "site": int(i), "value": float(rows[i]),
                               "excess": float(rows[i] - 1.0)})
    cols = f.col_sums()
    for j in np.nonzero(_excess(cols, 1.0) > 0)[0]:
        rep.violations.append({"kind": "column", "center": int(j), "value": float(cols[j]),
                               "excess": float(cols[j] - 1.0)})
    return rep


@dataclass
class BalanceReport:
    max_row_deviation: float
    max_column_deviation: float
    tol: float

    @property
    def balanced(self) -> bool:
        return self.max_row_deviation <= self.tol and self.max_column_deviation <= self.tol

    def to_dict(self) -> dict:
        return {"balanced": self.balanced, "max_row_deviation": self.max_row_deviation,
                "max_column_deviation": self.max_column_deviation, "tol": self.tol}


def check_balanced(f: ConstrainedDensity, tol: float = 1e-6) -> BalanceReport:
    """Largest deviation of the row and column sums from 1.

    Zero-weight atoms carry no mass and are skipped.
    """
    rows = f.row_sums()[f.phi.weights > 0]
    cols = f.col_sums()[f.psi.weights > 0]
    dr = float(np.abs(rows - 1.0).max()) if len(rows) else 0.0
    dc = float(np.abs(cols - 1.0).max()) if len(cols) else 0.0
    return BalanceReport(dr, dc, tol)


# ---------------------------------------------------------------- stability

@dataclass
class StabilityReport:
    """Mutually desiring (site, center) pairs plus unexhausted / unsated masses.

    Pairs are stored as parallel arrays; ``site_reason`` and ``center_reason``
    hold one of the reason strings for each pair.
    """

    sites: np.ndarray
    centers: np.ndarray
    site_reason: np.ndarray
    center_reason: np.ndarray
    unexhausted_mass: float
    unsated_mass: float
    tol: float

    @property
    def stable(self) -> bool:
        return len(self.sites) == 0

    @property
    def unstable_pairs(self) -> list:
        return list(zip(self.sites.tolist(), self.centers.tolist(),
                        self.site_reason.tolist(), self.center_reason.tolist()))

    def contains(self, i: int, j: int) -> bool:
        return bool(np.any((self.sites == i) & (self.centers == j)))

    def sated_or_exhausted(self) -> bool:
        """Either the unexhausted sites or the unsated centers carry total mass below 1."""
        return self.unexhausted_mass < 1.0 or self.unsated_mass < 1.0

    def to_dict(self, max_pairs: int = 1000) -> dict:
        return {"stable": self.stable, "n_unstable": int(len(self.sites)),
                "unstable_pairs": self.unstable_pairs[:max_pairs],
                "unexhausted_mass": self.unexhausted_mass, "unsated_mass": self.unsated_mass,
                "sated_or_exhausted": self.sated_or_exhausted(), "tol": self.tol}

    def pairs_csv(self) -> str:
        lines = ["site_index,center_index,site_reason,center_reason"]
        lines += [f"{i},{j},{a},{b}" for i, j, a, b in self.unstable_pairs]
        return "\n".join(lines) + "\n"


def support_radii(f: ConstrainedDensity, tol: float = STABILITY_TOL):
    """Farthest partner with ``f > tol`` per site and per center (``-inf`` if none)."""
    keep = f.values > tol
    site_r = np.full(f.n_sites, -np.inf)
    center_r = np.full(f.n_centers, -np.inf)
    np.maximum.at(site_r, f.sites[keep], f.dist[keep])
    np.maximum.at(center_r, f.centers[keep], f.dist[keep])
    return site_r, center_r


def check_stable(f: ConstrainedDensity, tol: float = STABILITY_TOL, block_pairs: int = 4_000_000) -> StabilityReport:
    """Scan all (site, center) pairs for mutual desire.

    A site desires a center when ``f`` is below the cap there and the site is
    unexhausted or sends mass strictly farther away; centers mirror this.
    Distances are compared with the shell tolerance, so exact ties never
    create desire.
    """
    geom = f.geometry
    dtol = _dist_tol(f)
    rows, cols = f.row_sums(), f.col_sums()
    unexhausted = rows < 1.0 - tol
    unsated = cols < 1.0 - tol
    site_r, center_r = support_radii(f, tol)
    n, m = f.n_sites, f.n_centers
    X, Y = f.phi.positions, f.psi.positions
    cap = f.cap
    out_i, out_j, out_sr, out_cr = [], [], [], []
    block = max(1, block_pairs // max(m, 1))
    for start in range(0, n, block):
        stop = min(start + block, n)
        D = geom.pairwise(X[start:stop], Y)
        lo, hi = np.searchsorted(f.sites, [start, stop])
        F = np.zeros((stop - start, m))
        F[f.sites[lo:hi] - start, f.centers[lo:hi]] = f.values[lo:hi]
        below_cap = F < cap[None, :] - tol
        site_far = site_r[start:stop, None] > D + dtol
        center_far = center_r[None, :] > D + dtol
        s_unex = unexhausted[start:stop, None]
        c_uns = unsated[None, :]
        bad = below_cap & (s_unex | site_far) & (c_uns | center_far)
        ii, jj = np.nonzero(bad)
        if len(ii):
            out_i.append(ii + start)
            out_j.append(jj)
            out_sr.append(np.where(unexhausted[ii + start], UNEXHAUSTED, FARTHER_MASS))
            out_cr.append(np.where(unsated[jj], UNSATED, FARTHER_MASS))
    cat = (lambda parts, dt: np.concatenate(parts) if parts else np.zeros(0, dtype=dt))
    return StabilityReport(
        cat(out_i, np.int64), cat(out_j, np.int64), cat(out_sr, object), cat(out_cr, object),
        unexhausted_mass=math.fsum(f.phi.weights[unexhausted]),
        unsated_mass=math.fsum(f.psi.weights[unsated]),
        tol=tol,
    )


# ------------------------------------------------------- mass transport

def mass_transport_identity(f: ConstrainedDensity, t: float = math.inf):
    """``(sum_i u_i g_i(t), sum_j w_j h_j(t))``, each summed in its own order."""
    keep = f.dist <= t + _dist_tol(f)
    u, w = f.phi.weights, f.psi.weights
    g = np.bincount(f.sites[keep], weights=f.values[keep] * w[f.centers[keep]], minlength=f.n_sites)
    h = np.bincount(f.centers[keep], weights=f.values[keep] * u[f.sites[keep]], minlength=f.n_centers)
    return math.fsum(u * g), math.fsum(w * h)


def _owner_curves(owner, dist, mass, n_owner, radii, tol):
    """Cumulative per-owner profiles evaluated at ``radii``: shape (n_owner, len(radii))."""
    order = np.lexsort((dist, owner))
    owner, dist, mass = owner[order], dist[order], mass[order]
    ptr = np.searchsorted(owner, np.arange(n_owner + 1))
    out = np.zeros((n_owner, len(radii)))
    for k in range(n_owner):
        d = dist[ptr[k]:ptr[k + 1]]
        if len(d) == 0:
            continue
        cum = np.concatenate([[0.0], np.cumsum(mass[ptr[k]:ptr[k + 1]])])
        out[k] = cum[np.searchsorted(d, radii + tol, side="right")]
    return out


def mass_transport_curve(f: ConstrainedDensity, radii: Optional[np.ndarray] = None, max_radii: int = 2000):
    """Both sides of the double-counting identity at many radii.

    The site side integrates per-site g-profiles against the site weights,
    the center side per-center h-profiles against the center weights.
    Defaults to the distinct support distances (thinned to ``max_radii``).
    """
    if radii is None:
        radii = np.unique(f.dist)
        if len(radii) > max_radii:
            radii = radii[np.linspace(0, len(radii) - 1, max_radii).astype(int)]
    radii = np.asarray(radii, dtype=float)
    tol = _dist_tol(f)
    u, w = f.phi.weights, f.psi.weights
    G = _owner_curves(f.sites, f.dist, f.values * w[f.centers], f.n_sites, radii, tol)
    H = _owner_curves(f.centers, f.dist, f.values * u[f.sites], f.n_centers, radii, tol)
    return radii, u @ G, w @ H


def check_mass_transport(f: ConstrainedDensity, rel: float = 1e-9, radii=None) -> dict:
    radii, site_side, center_side = mass_transport_curve(f, radii)
    scale = np.maximum(1.0, np.maximum(np.abs(site_side), np.abs(center_side)))
    err = np.abs(site_side - center_side) / scale
    worst = float(err.max()) if len(err) else 0.0
    return {"ok": worst <= rel, "max_relative_error": worst, "radii_checked": int(len(radii))}


# ------------------------------------------------ monotonicity / uniqueness

@dataclass
class MonotonicityReport:
    full_application_violations: int
    site_profile_violations: int
    center_profile_violations: int
    max_excess: float
    tol: float
    assumption: str = "generic-position assumed"

    @property
    def ok(self) -> bool:
        return (self.full_application_violations == 0 and self.site_profile_violations == 0
                and self.center_profile_violations == 0)

    def to_dict(self) -> dict:
        return {"ok": self.ok, "full_application_violations": self.full_application_violations,
                "site_profile_violations": self.site_profile_violations,
                "center_profile_violations": self.center_profile_violations,
                "max_excess": self.max_excess, "tol": self.tol, "assumption": self.assumption}


def _same_support(a: AtomicMeasure, b: AtomicMeasure) -> bool:
    return a.positions.shape == b.positions.shape and np.array_equal(a.positions, b.positions)


def check_monotonicity(f: ConstrainedDensity, f_s: ConstrainedDensity, full_application=None,
                       tol: float = 1e-9) -> MonotonicityReport:
    """Compare a stable density ``f`` for (mu, nu) with the site-optimal ``f_s`` for (phi, psi).

    Requires identical atom supports with ``mu >= phi`` and ``nu <= psi``
    weight by weight.  Atoms present in only one measure can be modelled as
    zero-weight atoms (see :meth:`AtomicMeasure.embedded_in`).

    Parameters
    ----------
    full_application
        Optional ``(sites, centers)`` arrays of pairs where the site fully
        applies in the limit of the site-optimal iteration; on those pairs
        ``f <= f_s`` is checked.
    """
    mu, nu, phi, psi = f.phi, f.psi, f_s.phi, f_s.psi
    if not (_same_support(mu, phi) and _same_support(nu, psi)):
        raise PreconditionError("monotonicity check needs identical atom supports")
    if np.any(mu.weights < phi.weights - 1e-15):
        k = int(np.argmax(phi.weights - mu.weights))
        raise PreconditionError(f"site weights not dominated at atom {k}: mu={mu.weights[k]} < phi={phi.weights[k]}")
    if np.any(nu.weights > psi.weights + 1e-15):
        k = int(np.argmax(nu.weights - psi.weights))
        raise PreconditionError(f"center weights not dominated at atom {k}: nu={nu.weights[k]} > psi={psi.weights[k]}")

    worst = 0.0
    n_full = 0
    if full_application is not None:
        fi, fj = (np.asarray(x, dtype=np.int64) for x in full_application)
        sel = (mu.weights[fi] > 0) & (psi.weights[fj] > 0)
        fi, fj = fi[sel], fj[sel]
        m = f.n_centers
        fv = _lookup(f, fi * m + fj)
        sv = _lookup(f_s, fi * m + fj)
        excess = fv - sv
        n_full = int(np.sum(excess > tol))
        if len(excess):
            worst = max(worst, float(excess.max()))

    # g-profile of f against nu must stay below that of f_s against psi
    owner, _, diff = profile_differences(f, f_s, side="site")
    live = mu.weights[owner] > 0
    n_site = int(np.sum(diff[live] > tol))
    if live.any():
        worst = max(worst, float(diff[live].max()))
    # h-profile of f against mu must stay above that of f_s against phi
    owner, _, diff = profile_differences(f_s, f, side="center")
    live = psi.weights[owner] > 0
    n_center = int(np.sum(diff[live] > tol))
    if live.any():
        worst = max(worst, float(diff[live].max()))
    return MonotonicityReport(n_full, n_site, n_center, worst, tol)


def _lookup(f: ConstrainedDensity, keys: np.ndarray) -> np.ndarray:
    fk = f.sites * f.n_centers + f.centers  # sorted, since f is sorted by (site, center)
    pos = np.searchsorted(fk, keys)
    pos = np.minimum(pos, max(len(fk) - 1, 0))
    hit = (fk[pos] == keys) if len(fk) else np.zeros(len(keys), dtype=bool)
    return np.where(hit, f.values[pos] if len(fk) else 0.0, 0.0)


def check_optimality(f: ConstrainedDensity, f_s: ConstrainedDensity, f_c: ConstrainedDensity,
                     tol: float = 1e-9) -> dict:
    """Sandwich ``g(f_c) <= g(f) <= g(f_s)`` and ``h(f_s) <= h(f) <= h(f_c)`` at all breakpoints."""
    out = {}
    for name, (lo, hi, side) in {
        "g_lower": (f_c, f, "site"), "g_upper": (f, f_s, "site"),
        "h_lower": (f_s, f, "center"), "h_upper": (f, f_c, "center"),
    }.items():
        _, _, diff = profile_differences(lo, hi, side)
        out[name] = float(diff.max()) if len(diff) else 0.0
    out["ok"] = all(v <= tol for k, v in out.items())
    out["tol"] = tol
    return out


@dataclass
class UniquenessCertificate:
    certified: bool
    max_profile_deviation: float
    max_density_deviation: Optional[float]
    density_agrees: Optional[bool]
    tol: float

    def __bool__(self) -> bool:
        return self.certified and self.density_agrees is not False

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def uniqueness_certificate(f_s: ConstrainedDensity, f_c: ConstrainedDensity, tol: float = 1e-9,
                           density_tol: float = 1e-6) -> UniquenessCertificate:
    """Check that site- and center-optimal g-profiles coincide at every breakpoint.

    When they do, every stable density shares the profiles; the densities
    themselves are then compared entrywise on pairs of positive weight.
    """
    _, _, diff = profile_differences(f_s, f_c, side="site")
    dev = float(np.abs(diff).max()) if len(diff) else 0.0
    certified = dev <= tol
    dens_dev = agree = None
    if certified:
        dens_dev = f_s.max_abs_difference(f_c)
        agree = dens_dev <= density_tol
    return UniquenessCertificate(certified, dev, dens_dev, agree, tol)


# --------------------------------------------------------------- allocations

@dataclass
class Allocation:
    """Site -> center index map, ``-1`` for sites sent nowhere.

    ``split_sites`` lists sites whose mass was divided between centers and
    which were assigned to their largest share (see ``extract_allocation``).
    """

    target: np.ndarray
    phi: AtomicMeasure
    psi: AtomicMeasure
    split_sites: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def unallocated_mass(self) -> float:
        return math.fsum(self.phi.weights[self.target < 0])

    @property
    def split_mass(self) -> float:
        return math.fsum(self.phi.weights[self.split_sites])

    def preimage_mass(self) -> np.ndarray:
        ok = self.target >= 0
        return np.bincount(self.target[ok], weights=self.phi.weights[ok], minlength=len(self.psi))


def extract_allocation(f: ConstrainedDensity, tol: float = 1e-9, split_mass: float = 0.0) -> Allocation:
    """Read off the site -> center map of a {0,1}-valued density toward a counting measure.

    Parameters
    ----------
    split_mass
        phi-mass of sites with fractional values that may be tolerated.  A
        grid discretization of a continuous site measure splits the cells
        straddling territory boundaries; such sites go to their largest
        share.  The default rejects any fractional value.
    """
    psi = f.psi
    if not psi.is_counting():
        k = int(np.argmax(np.abs(psi.weights - 1.0)))
        raise PreconditionError(f"center measure is not a counting measure (atom {k} has weight {psi.weights[k]})")
    frac = (f.values > tol) & (f.values < 1.0 - tol)
    split = np.unique(f.sites[frac])
    if len(split) and math.fsum(f.phi.weights[split]) > split_mass:
        k = int(np.argmax(frac))
        raise PreconditionError(
            f"density is not 0/1-valued: f({int(f.sites[k])}, {int(f.centers[k])}) = {f.values[k]!r}")
    is_split = np.zeros(f.n_sites, dtype=bool)
    is_split[split] = True
    ones = (f.values >= 1.0 - tol) & ~is_split[f.sites]
    si, cj = f.sites[ones], f.centers[ones]
    dup = np.nonzero(si[1:] == si[:-1])[0]
    if len(dup):
        k = dup[0]
        raise PreconditionError(f"site {int(si[k])} is sent to two centers ({int(cj[k])}, {int(cj[k + 1])})")
    target = np.full(f.n_sites, -1, dtype=np.int64)
    target[si] = cj
    if len(split):
        rows = is_split[f.sites]
        order = np.lexsort((-f.values[rows], f.sites[rows]))
        s_sites, s_centers = f.sites[rows][order], f.centers[rows][order]
        first = np.ones(len(s_sites), dtype=bool)
        first[1:] = s_sites[1:] != s_sites[:-1]
        target[s_sites[first]] = s_centers[first]
    return Allocation(target, f.phi, psi, split.astype(np.int64))


def check_stable_allocation(alloc: Allocation, tol: float = STABILITY_TOL,
                            block_pairs: int = 4_000_000) -> StabilityReport:
    """Scan for a site and a center preferring each other to their current partners."""
    phi, psi = alloc.phi, alloc.psi
    geom = phi.geometry
    dtol = geom.shell_tolerance(phi.positions, psi.positions)
    tau = alloc.target
    matched = tau >= 0
    own_d = np.full(len(phi), np.inf)
    if matched.any():
        own_d[matched] = geom.distance(phi.positions[matched], psi.positions[tau[matched]])
    load = alloc.preimage_mass()
    unsated = load < 1.0 - tol
    far = np.full(len(psi), -np.inf)
    np.maximum.at(far, tau[matched], own_d[matched])
    n, m = len(phi), len(psi)
    out_i, out_j, out_sr, out_cr = [], [], [], []
    block = max(1, block_pairs // max(m, 1))
    for start in range(0, n, block):
        stop = min(start + block, n)
        D = geom.pairwise(phi.positions[start:stop], psi.positions)
        not_mine = tau[start:stop, None] != np.arange(m)[None, :]
        site_wants = ~matched[start:stop, None] | (D < own_d[start:stop, None] - dtol)
        center_wants = unsated[None, :] | (D < far[None, :] - dtol)
        ii, jj = np.nonzero(not_mine & site_wants & center_wants)
        if len(ii):
            out_i.append(ii + start)
            out_j.append(jj)
            out_sr.append(np.where(matched[ii + start], "closer than match", UNEXHAUSTED))
            out_cr.append(np.where(unsated[jj], UNSATED, "closer than farthest pre-image"))
    cat = (lambda parts, dt: np.concatenate(parts) if parts else np.zeros(0, dtype=dt))
    return StabilityReport(cat(out_i, np.int64), cat(out_j, np.int64), cat(out_sr, object), cat(out_cr, object),
                           unexhausted_mass=alloc.unallocated_mass,
                           unsated_mass=math.fsum(psi.weights[unsated]), tol=tol)


# ------------------------------------------------------------- kernel view

def kernel_apply(f: ConstrainedDensity, sites=None, centers=None) -> float:
    """Mass moved from the site subset into the center subset (``None`` = all)."""
    S = _as_index(sites, f.n_sites)
    B = _as_index(centers, f.n_centers)
    in_s = np.zeros(f.n_sites, dtype=bool)
    in_s[S] = True
    in_b = np.zeros(f.n_centers, dtype=bool)
    in_b[B] = True
    keep = in_s[f.sites] & in_b[f.centers]
    return math.fsum(f.phi.weights[f.sites[keep]] * f.values[keep] * f.psi.weights[f.centers[keep]])


class TransportKernelView:
    """Evaluate ``T(i, B)``, the mass site ``i`` sends into the center set ``B``."""

    def __init__(self, density: ConstrainedDensity):
        self.density = density

    def __call__(self, i: int, centers=None) -> float:
        f = self.density
        cj, v = f.row(i)
        if centers is not None:
            B = _as_index(centers, f.n_centers)
            keep = np.isin(cj, B)
            cj, v = cj[keep], v[keep]
        return math.fsum(v * f.psi.weights[cj])

    def total(self, i: int) -> float:
        return self(i)

    def target_mass(self, centers=None) -> float:
        """``psi(B)``, an upper bound for every ``T(i, B)``."""
        B = _as_index(centers, self.density.n_centers)
        return math.fsum(self.density.psi.weights[B])


# --------------------------------------------------------- territory radii

def territory_report(f: ConstrainedDensity, tol: float = STABILITY_TOL) -> dict:
    """Largest support radius over sites and centers, compared with half the period."""
    site_r, center_r = support_radii(f, tol)
    s_max = float(site_r.max()) if len(site_r) else -math.inf
    c_max = float(center_r.max()) if len(center_r) else -math.inf
    geom = f.geometry
    half = float(geom.period_array.min()) / 2.0 if geom.is_torus else math.inf
    return {"max_site_radius": s_max, "max_center_radius": c_max, "half_period": half,
            "bounded": bool(max(s_max, c_max) <= half)}
