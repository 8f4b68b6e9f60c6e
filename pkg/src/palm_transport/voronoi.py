"""Voronoi transport kernel of a measure and its territories.

Each query point ``x`` spreads one unit of mass uniformly (with respect to
``psi``) over the smallest closed ball around ``x`` holding more than unit
mass, with a fractional share on the ball's boundary shell.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import Geometry, sample_directions
from .measures import AtomicMeasure
from .transport import PreconditionError

MASS_EPS = 1e-11


def _require_mass(psi: AtomicMeasure):
    if psi.total_mass < 1.0 - MASS_EPS:
        raise PreconditionError(f"center measure has total mass {psi.total_mass} < 1")


def _shell_data(psi: AtomicMeasure, queries: np.ndarray, eps: float = MASS_EPS):
    """Boundary shell per query.

    Returns the distance matrix, the radius of the first shell whose closed
    ball exceeds unit mass (``inf`` if none), the mass strictly inside it,
    the mass on it, and the sort order / shell ids / boundary shell column.
    """
    geom = psi.geometry
    tol = geom.shell_tolerance(psi.positions, queries)
    D = geom.pairwise(queries, psi.positions)
    nq, m = D.shape
    order = np.argsort(D, axis=1, kind="stable")
    Ds = np.take_along_axis(D, order, axis=1)
    Ws = psi.weights[order]
    start = np.ones((nq, m), dtype=bool)
    start[:, 1:] = np.diff(Ds, axis=1) > tol
    shell_id = np.cumsum(start, axis=1) - 1
    width = int(shell_id.max()) + 1 if m else 1
    rows = np.repeat(np.arange(nq), m)
    table = np.zeros((nq, width))
    np.add.at(table, (rows, shell_id.reshape(-1)), Ws.reshape(-1))
    cum = np.cumsum(table, axis=1)
    hit = cum > 1.0 + eps
    found = hit.any(axis=1)
    col = np.where(found, hit.argmax(axis=1), 0)
    q = np.arange(nq)
    interior = np.where(col > 0, cum[q, np.maximum(col - 1, 0)], 0.0)
    shell_mass = table[q, col]
    first = np.argmax(shell_id == col[:, None], axis=1)
    s = np.where(found, Ds[q, first], np.inf)
    interior = np.where(found, interior, cum[:, -1])
    shell_mass = np.where(found, shell_mass, 0.0)
    col = np.where(found, col, width)
    return D, s, interior, shell_mass, (order, shell_id, col)


def voronoi_radius(psi: AtomicMeasure, x) -> float:
    """Largest radius whose closed ball around ``x`` holds at most unit mass."""
    _require_mass(psi)
    q = np.atleast_2d(np.asarray(x, dtype=float))
    return float(_shell_data(psi, q)[1][0])


def voronoi_radii(psi: AtomicMeasure, queries) -> np.ndarray:
    _require_mass(psi)
    return _shell_data(psi, np.atleast_2d(np.asarray(queries, dtype=float)))[1]


def voronoi_matrix(psi: AtomicMeasure, queries, eps: float = MASS_EPS) -> np.ndarray:
    """Voronoi density ``v(x, j)`` for every query row and every atom of ``psi``."""
    _require_mass(psi)
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    D, s, interior, shell_mass, (order, shell_id, col) = _shell_data(psi, queries, eps)
    rest = 1.0 - interior
    c = np.where(shell_mass > 0, rest / np.where(shell_mass > 0, shell_mass, 1.0), 1.0)
    c = np.where(rest <= eps, 0.0, np.clip(c, 0.0, 1.0))
    c = np.where(np.isfinite(s), c, 1.0)
    V_sorted = np.where(shell_id < col[:, None], 1.0, 0.0)
    V_sorted = np.where(shell_id == col[:, None], c[:, None], V_sorted)
    V = np.empty_like(V_sorted)
    np.put_along_axis(V, order, V_sorted, axis=1)
    return V


def voronoi_density(psi: AtomicMeasure, x, j: Optional[int] = None):
    """``v(x, j)``; with ``j=None`` the whole row over the atoms of ``psi``."""
    row = voronoi_matrix(psi, np.atleast_2d(np.asarray(x, dtype=float)))[0]
    return row if j is None else float(row[j])


def in_territory_many(psi: AtomicMeasure, queries, j: int, eps: float = MASS_EPS) -> np.ndarray:
    """Open-ball membership test for many query points at once.

    ``x`` belongs to the territory of atom ``j`` iff the open ball through
    that atom holds mass below one; at exactly one the atom itself sits on
    the boundary sphere with positive mass, which excludes it.
    """
    _require_mass(psi)
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    geom = psi.geometry
    tol = geom.shell_tolerance(psi.positions, queries)
    out = np.empty(len(queries), dtype=bool)
    block = max(1, 4_000_000 // max(len(psi), 1))
    for start in range(0, len(queries), block):
        Q = queries[start:start + block]
        D = geom.pairwise(Q, psi.positions)
        r = D[:, j]
        open_mass = (D < r[:, None] - tol) @ psi.weights
        out[start:start + block] = open_mass < 1.0 - eps
    return out


def in_territory(psi: AtomicMeasure, x, j: int) -> bool:
    return bool(in_territory_many(psi, np.atleast_2d(np.asarray(x, dtype=float)), j)[0])


# --------------------------------------------------------------- diagnostics

def _ray_directions(dim: int, count: Optional[int], seed: int = 0) -> np.ndarray:
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        count = count or 360
        ang = 2 * np.pi * np.arange(count) / count
        return np.column_stack([np.cos(ang), np.sin(ang)])
    return sample_directions(dim, count or 1000, np.random.default_rng(seed))


def _default_extent(psi: AtomicMeasure) -> float:
    geom = psi.geometry
    if geom.is_torus:
        return float(geom.period_array.min()) / 2.0
    span = np.ptp(psi.positions, axis=0).max() if len(psi) > 1 else 0.0
    return 4.0 * max(float(span), 1.0)


@dataclass
class TerritoryDiagnostics:
    center: int
    star_shaped: bool
    bounded: bool
    convex: bool
    max_extent: float
    extents: np.ndarray
    directions: np.ndarray
    search_extent: float

    def to_dict(self) -> dict:
        return {"center": self.center, "star_shaped": self.star_shaped, "bounded": self.bounded,
                "convex": self.convex, "max_extent": self.max_extent,
                "search_extent": self.search_extent, "rays": int(len(self.directions))}

    def boundary(self, psi: AtomicMeasure) -> np.ndarray:
        """Sampled boundary points (ray extents), capped at the search extent."""
        ext = np.minimum(self.extents, self.search_extent)
        return psi.positions[self.center] + ext[:, None] * self.directions


def territory_diagnostics(psi: AtomicMeasure, j: int, rays: Optional[int] = None,
                          max_extent: Optional[float] = None, samples: int = 200,
                          bisection_steps: int = 30, seed: int = 0) -> TerritoryDiagnostics:
    """Probe the territory of atom ``j`` along rays from it.

    Membership along each ray must be an initial segment (star shape).  The
    ray extent is refined by bisection; rays that never leave within the
    search extent make the territory unbounded.  Convexity is probed with
    midpoints of boundary samples.
    """
    _require_mass(psi)
    dirs = _ray_directions(psi.dimension, rays, seed)
    T = float(max_extent or _default_extent(psi))
    origin = psi.positions[j]
    ts = np.linspace(0.0, T, samples + 1)[1:]
    pts = origin[None, None, :] + ts[None, :, None] * dirs[:, None, :]
    inside = in_territory_many(psi, pts.reshape(-1, psi.dimension), j).reshape(len(dirs), samples)
    first_out = np.where(~inside.all(axis=1), np.argmin(inside, axis=1), samples)
    after = np.arange(samples)[None, :] >= first_out[:, None]
    star = not bool(np.any(inside & after))
    bounded = bool(np.all(first_out < samples))

    lo = np.where(first_out > 0, ts[np.maximum(first_out - 1, 0)], 0.0)
    hi = np.where(first_out < samples, ts[np.minimum(first_out, samples - 1)], np.inf)
    finite = np.isfinite(hi)
    lo_f, hi_f = lo[finite].copy(), hi[finite].copy()
    d_f = dirs[finite]
    for _ in range(bisection_steps):
        mid = 0.5 * (lo_f + hi_f)
        ok = in_territory_many(psi, origin + mid[:, None] * d_f, j)
        lo_f = np.where(ok, mid, lo_f)
        hi_f = np.where(ok, hi_f, mid)
    extents = np.full(len(dirs), np.inf)
    extents[finite] = lo_f

    # convexity: midpoints of points just inside the sampled boundary
    reach = np.minimum(extents, T) * 0.98
    inner = origin + reach[:, None] * dirs
    pick = np.linspace(0, len(dirs) - 1, min(len(dirs), 72)).astype(int)
    P = inner[pick]
    a, b = np.triu_indices(len(P), k=1)
    convex = bool(np.all(in_territory_many(psi, 0.5 * (P[a] + P[b]), j))) if len(a) else True
    max_ext = float(extents.max()) if bounded else math.inf
    return TerritoryDiagnostics(int(j), star, bounded, convex, max_ext, extents, dirs, T)


# ------------------------------------------------------- counting measures

def _clip(poly: np.ndarray, normal: np.ndarray, offset: float) -> np.ndarray:
    """Keep the part of a convex polygon with ``normal . p <= offset``."""
    if len(poly) == 0:
        return poly
    out = []
    vals = poly @ normal - offset
    for k in range(len(poly)):
        p, q = poly[k], poly[(k + 1) % len(poly)]
        vp, vq = vals[k], vals[(k + 1) % len(poly)]
        if vp <= 0:
            out.append(p)
        if (vp < 0 < vq) or (vq < 0 < vp):
            out.append(p + (q - p) * (vp / (vp - vq)))
    return np.array(out)


def voronoi_cell_polygon(psi: AtomicMeasure, j: int, bbox=None) -> np.ndarray:
    """Exact planar cell of atom ``j`` for a counting measure, as polygon vertices.

    In torus mode the cell is computed in the unrolled plane against periodic
    images, so vertices may leave the fundamental domain.
    """
    if psi.dimension != 2:
        raise ValueError("exact cells are produced in the plane only")
    if not psi.is_counting():
        raise PreconditionError("exact cells need a counting measure")
    geom = psi.geometry
    me = psi.positions[j]
    others = []
    if geom.is_torus:
        P = geom.period_array
        disp = geom.displacement(psi.positions, me[None, :])
        for sx in (-1, 0, 1):
            for sy in (-1, 0, 1):
                pts = me + disp + np.array([sx * P[0], sy * P[1]])
                if sx == 0 and sy == 0:
                    pts = np.delete(pts, j, axis=0)
                others.append(pts)
        half = P / 2.0
        lo, hi = me - half, me + half
    else:
        others.append(np.delete(psi.positions, j, axis=0))
        if bbox is None:
            span = max(float(np.ptp(psi.positions, axis=0).max()), 1.0)
            lo = psi.positions.min(axis=0) - span
            hi = psi.positions.max(axis=0) + span
        else:
            lo, hi = np.asarray(bbox[0], float), np.asarray(bbox[1], float)
    poly = np.array([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]])
    for q in np.vstack(others):
        n = q - me
        poly = _clip(poly, n, 0.5 * (q @ q - me @ me))
    return poly


@dataclass
class VoronoiCell:
    """Territory of one atom: membership test plus a boundary polyline in the plane."""

    psi: AtomicMeasure
    center: int
    polyline: Optional[np.ndarray] = None

    def contains(self, x) -> bool:
        return in_territory(self.psi, x, self.center)

    @classmethod
    def build(cls, psi: AtomicMeasure, j: int, rays: Optional[int] = None) -> "VoronoiCell":
        line = None
        if psi.dimension == 2:
            if psi.is_counting():
                line = voronoi_cell_polygon(psi, j)
            else:
                line = territory_diagnostics(psi, j, rays).boundary(psi)
        return cls(psi, j, line)

    def svg_path(self, scale: float = 1.0) -> str:
        if self.polyline is None or len(self.polyline) == 0:
            return ""
        pts = " L ".join(f"{x * scale:.4f},{y * scale:.4f}" for x, y in self.polyline)
        return f"M {pts} Z"
