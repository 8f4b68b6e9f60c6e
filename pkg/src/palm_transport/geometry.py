"""Metric context: Euclidean space or a flat torus.

Every distance in the package goes through a :class:`Geometry`.  Points are
plain numpy arrays of shape ``(d,)`` (or ``(n, d)`` for batches); in torus mode
they are stored canonically in ``[0, period_i)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


class GeometryError(ValueError):
    """Raised when points do not conform to a geometry or an operation is unsupported."""


@dataclass(frozen=True)
class Geometry:
    mode: str
    dimension: int
    period: Optional[tuple] = None

    def __post_init__(self):
        if self.mode not in ("euclidean", "torus"):
            raise GeometryError(f"unknown geometry mode {self.mode!r}")
        if int(self.dimension) < 1:
            raise GeometryError("dimension must be >= 1")
        object.__setattr__(self, "dimension", int(self.dimension))
        if self.mode == "torus":
            if self.period is None or len(self.period) != self.dimension:
                raise GeometryError("torus mode needs one period per axis")
            period = tuple(float(p) for p in self.period)
            if any(not np.isfinite(p) or p <= 0 for p in period):
                raise GeometryError("torus periods must be positive")
            object.__setattr__(self, "period", period)
        elif self.period is not None:
            raise GeometryError("euclidean mode takes no period")

    @classmethod
    def euclidean(cls, dimension: int) -> "Geometry":
        return cls("euclidean", dimension)

    @classmethod
    def torus(cls, period: Sequence[float]) -> "Geometry":
        period = tuple(float(p) for p in np.atleast_1d(period))
        return cls("torus", len(period), period)

    @classmethod
    def from_dict(cls, spec: dict, dimension: Optional[int] = None) -> "Geometry":
        kind = spec.get("type", "euclidean")
        if kind == "torus":
            return cls.torus(spec["period"])
        if kind == "euclidean":
            dim = spec.get("dimension", dimension)
            if dim is None:
                raise GeometryError("euclidean geometry needs a dimension")
            return cls.euclidean(dim)
        raise GeometryError(f"unknown geometry type {kind!r}")

    def to_dict(self) -> dict:
        if self.is_torus:
            return {"type": "torus", "period": list(self.period)}
        return {"type": "euclidean", "dimension": self.dimension}

    @property
    def is_torus(self) -> bool:
        return self.mode == "torus"

    @property
    def period_array(self) -> np.ndarray:
        return np.asarray(self.period, dtype=float)

    def volume(self) -> Optional[float]:
        """Torus volume; ``None`` in Euclidean mode."""
        if not self.is_torus:
            return None
        return float(np.prod(self.period_array))

    def max_distance(self, points: Optional[np.ndarray] = None) -> float:
        """Upper bound on the distance between any two (given) points."""
        if self.is_torus:
            return float(np.sqrt(np.sum((self.period_array / 2.0) ** 2)))
        if points is None or len(points) == 0:
            return np.inf
        pts = np.asarray(points, dtype=float)
        return float(np.sqrt(np.sum((pts.max(axis=0) - pts.min(axis=0)) ** 2)))

    def check(self, points) -> np.ndarray:
        """Return ``points`` as a float array, raising on dimension mismatch."""
        arr = np.asarray(points, dtype=float)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if arr.shape[-1] != self.dimension or arr.ndim > 2:
            raise GeometryError(
                f"expected points of dimension {self.dimension}, got shape {arr.shape}"
            )
        return arr

    def canonical(self, points) -> np.ndarray:
        arr = self.check(points)
        if self.is_torus:
            period = self.period_array
            arr = np.mod(arr, period)
            # np.mod can return exactly `period` for tiny negative inputs
            arr = np.where(arr >= period, arr - period, arr)
        return arr

    def displacement(self, p, q) -> np.ndarray:
        """Componentwise absolute displacement |p - q| (minimum image on the torus)."""
        diff = np.abs(self.check(p) - self.check(q))
        if self.is_torus:
            period = self.period_array
            diff = np.mod(diff, period)
            diff = np.minimum(diff, period - diff)
        return diff

    def signed_displacement(self, p, q) -> np.ndarray:
        """``p - q`` per axis, wrapped into ``[-period/2, period/2)`` on the torus."""
        diff = self.check(p) - self.check(q)
        if self.is_torus:
            period = self.period_array
            diff = np.mod(diff + period / 2, period) - period / 2
        return diff

    def distance(self, p, q):
        """Distance between points (broadcasting over leading axes)."""
        diff = self.displacement(p, q)
        return np.sqrt(np.sum(diff * diff, axis=-1))

    def pairwise(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Distance matrix of shape ``(len(a), len(b))``."""
        a = self.check(a).reshape(-1, self.dimension)
        b = self.check(b).reshape(-1, self.dimension)
        out = np.zeros((len(a), len(b)))
        for k in range(self.dimension):
            diff = np.abs(a[:, k, None] - b[None, :, k])
            if self.is_torus:
                period = self.period[k]
                diff = np.mod(diff, period)
                diff = np.minimum(diff, period - diff)
            out += diff * diff
        return np.sqrt(out)

    def shell_tolerance(self, *point_sets) -> float:
        """Tie tolerance for grouping distances into shells.

        On the torus canonical coordinates lie in ``[0, period)``, so the
        largest period is used; this keeps tie classes translation invariant.
        """
        if self.is_torus:
            return 1e-9 * (1.0 + max(self.period))
        scale = 0.0
        for pts in point_sets:
            if pts is not None and len(pts):
                scale = max(scale, float(np.max(np.abs(pts))))
        return 1e-9 * (1.0 + scale)


def distance(p, q, geom: Geometry):
    return geom.distance(p, q)


def translate(measure, v, geom: Optional[Geometry] = None):
    """Apply the flow to a measure: every atom ``p`` moves to ``p - v``."""
    geom = geom or measure.geometry
    v = geom.check(v).reshape(-1)
    return measure.with_positions(geom.canonical(measure.positions - v), provenance="translated")


def _support(points: np.ndarray, directions: np.ndarray) -> np.ndarray:
    return (points @ directions.T).max(axis=0)


def sample_directions(dimension: int, count: int, rng=None) -> np.ndarray:
    """Unit vectors covering the sphere: evenly spaced in d = 2, random otherwise."""
    if dimension == 1:
        return np.array([[1.0], [-1.0]])
    if dimension == 2:
        angles = np.linspace(0.0, 2.0 * np.pi, count, endpoint=False)
        return np.column_stack([np.cos(angles), np.sin(angles)])
    rng = np.random.default_rng(0) if rng is None else rng
    dirs = rng.standard_normal((count, dimension))
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def ball_contained_in_hull_interior(points, center, radius: float, geom: Optional[Geometry] = None,
                                    directions: int = 20000, return_method: bool = False):
    """Whether the closed ball ``B(center, radius)`` lies in the interior of conv(points).

    Exact (via hull facets) for d <= 3; above that the support function is
    compared on sampled directions.  With ``return_method=True`` a
    ``(answer, method)`` pair is returned.
    """
    if geom is not None and geom.is_torus:
        raise GeometryError("convex hulls are only defined in euclidean mode")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    a = np.asarray(center, dtype=float).reshape(-1)
    if len(pts) == 0:
        raise GeometryError("empty point set")
    if radius <= 0:
        raise GeometryError("radius must be positive")
    d = pts.shape[1]
    if a.shape[0] != d:
        raise GeometryError("center dimension mismatch")

    if d == 1:
        inside = bool(a[0] - radius > pts.min() and a[0] + radius < pts.max())
        method = "interval"
    elif d <= 3:
        from scipy.spatial import ConvexHull, QhullError

        method = "hull-facets"
        try:
            hull = ConvexHull(pts)
        except (QhullError, ValueError):
            # degenerate hull has empty interior
            inside = False
        else:
            # equations: unit normal . x + offset <= 0 inside
            slack = -(hull.equations[:, :-1] @ a + hull.equations[:, -1])
            inside = bool(np.all(slack > radius))
    else:
        method = "direction-sampling"
        dirs = sample_directions(d, directions)
        inside = bool(np.all(dirs @ a + radius < _support(pts, dirs)))
    return (inside, method) if return_method else inside
