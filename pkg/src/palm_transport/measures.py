"""Finite atomic measures standing in for the site measure and the center measure.

A measure is a set of weighted atoms living in a :class:`~.geometry.Geometry`.
Continuous measures are discretized by midpoint quadrature on a grid, so every
ball integral becomes a finite sum over atoms.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .geometry import Geometry, GeometryError


class MeasureSpecError(ValueError):
    """Invalid measure specification."""


class AtomicMeasure:
    """Weighted atoms ``sum_k weights[k] * delta(positions[k])``.

    Coincident atoms are merged (weights summed) keeping first-occurrence order,
    so atom indices are stable under translation.
    """

    def __init__(self, positions, weights, geometry: Geometry, provenance: Optional[dict] = None,
                 allow_null: bool = False):
        pos = np.asarray(positions, dtype=float)
        if pos.ndim == 1:
            pos = pos.reshape(-1, geometry.dimension) if geometry.dimension > 1 else pos.reshape(-1, 1)
        if pos.size == 0:
            pos = pos.reshape(0, geometry.dimension)
        pos = geometry.canonical(pos).reshape(-1, geometry.dimension)
        wts = np.broadcast_to(np.asarray(weights, dtype=float), (len(pos),)).copy()
        if np.any(~np.isfinite(wts)) or np.any(wts < 0) or (not allow_null and np.any(wts == 0)):
            raise MeasureSpecError("atom weights must be positive and finite")
        pos, wts = _merge_coincident(pos, wts)
        pos.flags.writeable = False
        wts.flags.writeable = False
        self.positions = pos
        self.weights = wts
        self.geometry = geometry
        self.provenance = dict(provenance or {"type": "explicit"})

    def __len__(self) -> int:
        return len(self.weights)

    def __repr__(self) -> str:
        return (f"AtomicMeasure(n={len(self)}, mass={self.total_mass:.6g}, "
                f"type={self.provenance.get('type')!r}, geometry={self.geometry.mode})")

    @property
    def dimension(self) -> int:
        return self.geometry.dimension

    @property
    def total_mass(self) -> float:
        return math.fsum(self.weights)

    def intensity(self, volume: Optional[float] = None) -> float:
        """Total mass per unit volume (torus volume unless given)."""
        vol = volume if volume is not None else self.geometry.volume()
        if vol is None:
            vol = self.provenance.get("volume")
        if vol is None:
            raise MeasureSpecError("intensity needs a volume in euclidean mode")
        return self.total_mass / vol

    def is_counting(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(self.weights - 1.0) <= tol))

    def with_positions(self, positions, provenance: str = "translated") -> "AtomicMeasure":
        prov = dict(self.provenance)
        prov["derived"] = provenance
        return AtomicMeasure(positions, self.weights, self.geometry, prov)

    def with_weights(self, weights, allow_null: bool = False) -> "AtomicMeasure":
        return AtomicMeasure(self.positions, weights, self.geometry, self.provenance, allow_null=allow_null)

    def embedded_in(self, support: "AtomicMeasure") -> "AtomicMeasure":
        """This measure written on the atoms of ``support`` (zero weight where absent).

        Zero-weight atoms take part in the iteration without carrying mass,
        which is how sites or centers outside the support are evaluated.
        """
        if support.geometry != self.geometry:
            raise ValueError("different geometries")
        lookup = {tuple(p): k for k, p in enumerate(support.positions)}
        wts = np.zeros(len(support))
        for p, w in zip(self.positions, self.weights):
            k = lookup.get(tuple(p))
            if k is None:
                raise ValueError(f"atom at {tuple(p)} is not in the support")
            wts[k] = w
        prov = dict(self.provenance)
        prov["derived"] = "embedded"
        return AtomicMeasure(support.positions, wts, self.geometry, prov, allow_null=True)

    def scaled(self, factor: float) -> "AtomicMeasure":
        if factor <= 0:
            raise MeasureSpecError("scale factor must be positive")
        return self.with_weights(self.weights * factor)

    def restrict(self, mask) -> "AtomicMeasure":
        mask = np.asarray(mask, dtype=bool)
        return AtomicMeasure(self.positions[mask], self.weights[mask], self.geometry, self.provenance)

    def distances_from(self, point) -> np.ndarray:
        point = self.geometry.check(point).reshape(-1)
        return self.geometry.distance(self.positions, point[None, :])

    def nearest_atom(self, point) -> int:
        return int(np.argmin(self.distances_from(point)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["index"] + [f"x{k}" for k in range(self.dimension)] + ["weight"])
        for k, (p, w) in enumerate(zip(self.positions, self.weights)):
            writer.writerow([k] + [repr(float(c)) for c in p] + [repr(float(w))])
        return buf.getvalue()


def _merge_coincident(pos: np.ndarray, wts: np.ndarray):
    # NOTE: zero-weight atoms are merged like any other
    if len(pos) < 2:
        return pos.copy(), wts
    _, first, inverse = np.unique(pos, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    if len(first) == len(pos):
        return pos.copy(), wts
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    merged = np.zeros(len(first))
    np.add.at(merged, rank[inverse], wts)
    return pos[np.sort(first)].copy(), merged


# --------------------------------------------------------------------- builders

def _as_axis_list(value, dim: int, name: str) -> list:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        arr = np.repeat(arr, dim)
    if arr.size != dim:
        raise MeasureSpecError(f"{name} needs {dim} entries")
    return arr.tolist()


def _window(spec: dict, geom: Geometry) -> np.ndarray:
    if "window" in spec:
        win = np.asarray(spec["window"], dtype=float)
        if win.ndim == 1:
            win = win.reshape(1, 2)
        if win.shape != (geom.dimension, 2):
            raise MeasureSpecError(f"window must have shape ({geom.dimension}, 2)")
    elif geom.is_torus:
        win = np.column_stack([np.zeros(geom.dimension), geom.period_array])
    else:
        raise MeasureSpecError("a window is required in euclidean mode")
    if np.any(win[:, 1] <= win[:, 0]):
        raise MeasureSpecError("empty window")
    return win


def grid_lebesgue(geom: Geometry, window=None, resolution=10, scale: float = 1.0) -> AtomicMeasure:
    spec = {"type": "grid_lebesgue", "resolution": resolution, "scale": scale}
    if window is not None:
        spec["window"] = window
    return make_measure(spec, geom)


def _build_grid(spec: dict, geom: Geometry):
    win = _window(spec, geom)
    res = np.asarray(_as_axis_list(spec.get("resolution", 10), geom.dimension, "resolution"))
    if np.any(res < 1) or np.any(res != np.round(res)):
        raise MeasureSpecError("resolution must be a positive integer")
    scale = float(spec.get("scale", 1.0))
    if scale <= 0:
        raise MeasureSpecError("scale must be positive")
    res = res.astype(int)
    widths = (win[:, 1] - win[:, 0]) / res
    axes = [win[k, 0] + (np.arange(res[k]) + 0.5) * widths[k] for k in range(geom.dimension)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pos = np.column_stack([m.reshape(-1) for m in mesh])
    weight = scale * float(np.prod(widths))
    prov = {"type": "grid_lebesgue", "window": win.tolist(), "resolution": res.tolist(),
            "scale": scale, "cell": widths.tolist(), "volume": float(np.prod(win[:, 1] - win[:, 0]))}
    return pos, np.full(len(pos), weight), prov, float(widths.min())


def _build_lattice(spec: dict, geom: Geometry):
    spacing = np.asarray(_as_axis_list(spec.get("spacing", 1.0), geom.dimension, "spacing"))
    if np.any(spacing <= 0):
        raise MeasureSpecError("spacing must be positive")
    weight = float(spec.get("weight", 1.0))
    offset = np.asarray(_as_axis_list(spec.get("offset", 0.0), geom.dimension, "offset"))
    if spec.get("seed") is not None:
        rng = np.random.default_rng(spec["seed"])
        offset = offset + rng.uniform(0.0, 1.0, geom.dimension) * spacing
    win = _window(spec, geom)
    # half-open window on the torus so the wrap does not duplicate atoms
    half_open = geom.is_torus and "window" not in spec
    axes = []
    for k in range(geom.dimension):
        lo, hi = win[k]
        first = math.ceil((lo - offset[k]) / spacing[k] - 1e-9)
        last = math.floor((hi - offset[k]) / spacing[k] + 1e-9)
        vals = offset[k] + spacing[k] * np.arange(first, last + 1)
        if half_open:
            vals = vals[vals < hi - 1e-9 * spacing[k]]
        axes.append(vals)
    mesh = np.meshgrid(*axes, indexing="ij")
    pos = np.column_stack([m.reshape(-1) for m in mesh])
    if len(pos) == 0:
        raise MeasureSpecError("lattice has no atoms in the window")
    prov = {"type": "lattice", "spacing": spacing.tolist(), "weight": weight,
            "offset": offset.tolist(), "volume": float(np.prod(win[:, 1] - win[:, 0]))}
    return pos, np.full(len(pos), weight), prov, float(spacing.min())


def _build_poisson(spec: dict, geom: Geometry):
    intensity = float(spec.get("intensity", 1.0))
    if intensity <= 0:
        raise MeasureSpecError("intensity must be positive")
    win = _window(spec, geom)
    vol = float(np.prod(win[:, 1] - win[:, 0]))
    rng = np.random.default_rng(spec.get("seed"))
    count = int(rng.poisson(intensity * vol))
    pos = win[:, 0] + rng.uniform(size=(count, geom.dimension)) * (win[:, 1] - win[:, 0])
    weight = float(spec.get("weight", 1.0))
    prov = {"type": "poisson", "intensity": intensity, "seed": spec.get("seed"), "volume": vol}
    spacing = (vol / max(count, 1)) ** (1.0 / geom.dimension)
    return pos, np.full(count, weight), prov, spacing


def _factor_geometry(geom: Geometry, start: int, dim: int) -> Geometry:
    if geom.is_torus:
        return Geometry.torus(geom.period[start:start + dim])
    return Geometry.euclidean(dim)


def _factor_dim(spec: dict) -> int:
    if "dimension" in spec:
        return int(spec["dimension"])
    if "window" in spec:
        return np.atleast_2d(np.asarray(spec["window"], dtype=float)).shape[0]
    if "positions" in spec:
        arr = np.asarray(spec["positions"], dtype=float)
        return 1 if arr.ndim == 1 else arr.shape[1]
    for key in ("resolution", "spacing", "offset"):
        if key in spec and np.ndim(spec[key]) == 1:
            return len(spec[key])
    raise MeasureSpecError("product factors need a 'dimension'")


def _build_product(spec: dict, geom: Geometry):
    factors = spec.get("factors")
    if not factors or len(factors) < 2:
        raise MeasureSpecError("product needs at least two factors")
    dims = [_factor_dim(f) for f in factors]
    if sum(dims) != geom.dimension:
        raise MeasureSpecError("factor dimensions must add up to the geometry dimension")
    pos, wts = np.zeros((1, 0)), np.ones(1)
    start = 0
    spacing = np.inf
    for fspec, dim in zip(factors, dims):
        sub = make_measure(fspec, _factor_geometry(geom, start, dim))
        start += dim
        spacing = min(spacing, sub.provenance.get("_spacing", np.inf))
        pos = np.column_stack([np.repeat(pos, len(sub), axis=0), np.tile(sub.positions, (len(pos), 1))])
        wts = np.repeat(wts, len(sub)) * np.tile(sub.weights, len(wts))
    prov = {"type": "product", "factors": factors}
    return pos, wts, prov, spacing


def _build_sum(spec: dict, geom: Geometry):
    terms = spec.get("terms")
    if not terms:
        raise MeasureSpecError("sum needs at least one term")
    parts = [make_measure(t, geom) for t in terms]
    pos = np.vstack([p.positions for p in parts])
    wts = np.concatenate([p.weights for p in parts])
    spacing = min(p.provenance.get("_spacing", np.inf) for p in parts)
    return pos, wts, {"type": "sum", "terms": terms}, spacing


_BUILDERS = {
    "sum": _build_sum,
    "grid_lebesgue": _build_grid,
    "lattice": _build_lattice,
    "poisson": _build_poisson,
    "product": _build_product,
}


def make_measure(spec: dict, geom: Geometry) -> AtomicMeasure:
    """Build an :class:`AtomicMeasure` from a JSON-style spec.

    Supported ``type`` values: ``atoms``, ``grid_lebesgue``, ``lattice``,
    ``poisson``, ``product`` and ``sum`` (superposition of ``terms``).  Any spec may carry
    ``"jitter": {"seed": s, "amplitude": 1e-3}`` to perturb positions by a
    seeded uniform amount of at most ``amplitude * spacing`` per axis
    (generic-position mode).
    """
    kind = spec.get("type", "atoms")
    if kind in ("atoms", "explicit"):
        pos = np.asarray(spec["positions"], dtype=float)
        if pos.ndim == 1:
            pos = pos.reshape(-1, 1) if geom.dimension == 1 else pos.reshape(1, -1)
        try:
            geom.check(pos)
        except GeometryError as exc:
            raise MeasureSpecError(str(exc)) from exc
        wts = np.broadcast_to(np.asarray(spec.get("weights", 1.0), dtype=float), (len(pos),))
        prov = {"type": "explicit"}
        if len(pos) > 1:
            d = geom.pairwise(pos, pos)
            d[np.diag_indices_from(d)] = np.inf
            spacing = float(d.min())
        else:
            spacing = 1.0
    elif kind in _BUILDERS:
        pos, wts, prov, spacing = _BUILDERS[kind](spec, geom)
    else:
        raise MeasureSpecError(f"unknown measure type {kind!r}")

    jitter = spec.get("jitter")
    if jitter:
        if not isinstance(jitter, dict):
            jitter = {"seed": int(jitter)}
        amp = float(jitter.get("amplitude", 1e-3)) * spacing
        rng = np.random.default_rng(jitter.get("seed"))
        pos = pos + rng.uniform(-amp, amp, size=pos.shape)
        quantum = jitter.get("quantum")
        if quantum:
            pos = np.round(pos / quantum) * quantum
        prov["jitter"] = dict(jitter)
    prov["_spacing"] = spacing
    return AtomicMeasure(pos, wts, geom, prov)


# ------------------------------------------------------------------ ball queries

def ball_mass(m: AtomicMeasure, center, radius: float, closure: str = "closed",
              tol: Optional[float] = None) -> float:
    """psi(B(center, radius)) for the closed ball, or the open ball with ``closure='open'``."""
    if radius < 0:
        raise ValueError("radius must be non-negative")
    d = m.distances_from(center)
    if closure == "closed":
        if tol is None:
            tol = m.geometry.shell_tolerance(m.positions)
        mask = d <= radius + tol
    elif closure == "open":
        mask = d < radius
    else:
        raise ValueError("closure must be 'open' or 'closed'")
    return math.fsum(m.weights[mask])


@dataclass
class ShellIndex:
    """Atoms grouped by distance from a fixed query point.

    ``radii[k]`` is the smallest distance in shell ``k``; ``members[k]`` the atom
    indices in that shell; ``cumulative[k]`` the closed-ball mass at ``radii[k]``.
    """

    query: np.ndarray
    radii: np.ndarray
    members: List[np.ndarray]
    shell_mass: np.ndarray
    cumulative: np.ndarray
    tolerance: float = field(default=0.0)

    def __len__(self) -> int:
        return len(self.radii)

    def first_exceeding(self, level: float = 1.0, eps: float = 1e-11) -> Optional[int]:
        """Index of the first shell whose cumulative mass exceeds ``level``."""
        hits = np.nonzero(self.cumulative > level + eps)[0]
        return int(hits[0]) if len(hits) else None


def shell_breaks(sorted_dist: np.ndarray, tol: float) -> np.ndarray:
    """Boolean mask marking the first element of each tie class of sorted distances."""
    start = np.ones(len(sorted_dist), dtype=bool)
    if len(sorted_dist) > 1:
        start[1:] = np.diff(sorted_dist) > tol
    return start


def build_shells(m: AtomicMeasure, query, tol: Optional[float] = None) -> ShellIndex:
    if len(m) == 0:
        raise ValueError("cannot build shells of an empty measure")
    query = m.geometry.check(query).reshape(-1)
    if tol is None:
        tol = m.geometry.shell_tolerance(m.positions, query[None, :])
    d = m.distances_from(query)
    order = np.lexsort((np.arange(len(d)), d))
    ds = d[order]
    starts = np.nonzero(shell_breaks(ds, tol))[0]
    bounds = np.append(starts, len(ds))
    members = [order[bounds[k]:bounds[k + 1]] for k in range(len(starts))]
    shell_mass = np.array([math.fsum(m.weights[idx]) for idx in members])
    cumulative = np.cumsum(shell_mass)
    return ShellIndex(query, ds[starts], members, shell_mass, cumulative, tol)
