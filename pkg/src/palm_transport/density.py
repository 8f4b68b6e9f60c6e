"""Sparse (site, center) densities and their row/column sums."""
from __future__ import annotations

import csv
import io
import json
from typing import Optional

import numpy as np

from .measures import AtomicMeasure


class ConstrainedDensity:
    """A non-negative function on (site atom, center atom) pairs, stored sparsely.

    Parameters
    ----------
    sites, centers, values
        COO triplets; zero entries may be omitted.
    phi, psi
        Site and center measures; row sums integrate against ``psi.weights``,
        column sums against ``phi.weights``.
    role_swap
        True for center-optimal results transposed back to (site, center).
    """

    def __init__(self, sites, centers, values, phi: AtomicMeasure, psi: AtomicMeasure,
                 role_swap: bool = False, cap: Optional[np.ndarray] = None):
        if phi.geometry != psi.geometry:
            raise ValueError("site and center measures live in different geometries")
        sites = np.asarray(sites, dtype=np.int64).reshape(-1)
        centers = np.asarray(centers, dtype=np.int64).reshape(-1)
        values = np.asarray(values, dtype=float).reshape(-1)
        keep = values != 0.0
        sites, centers, values = sites[keep], centers[keep], values[keep]
        order = np.lexsort((centers, sites))
        self.sites = sites[order]
        self.centers = centers[order]
        self.values = values[order]
        self.phi = phi
        self.psi = psi
        self.role_swap = role_swap
        # per-center cap on f: ones (density cap) or 1/w_j (counting cap)
        self.cap = np.ones(len(psi)) if cap is None else np.asarray(cap, dtype=float)
        self._dist = None

    def __repr__(self) -> str:
        return (f"ConstrainedDensity(sites={self.n_sites}, centers={self.n_centers}, "
                f"nnz={self.nnz}, role_swap={self.role_swap})")

    @classmethod
    def from_dense(cls, matrix, phi, psi, **kwargs) -> "ConstrainedDensity":
        matrix = np.asarray(matrix, dtype=float)
        i, j = np.nonzero(matrix)
        return cls(i, j, matrix[i, j], phi, psi, **kwargs)

    @classmethod
    def zeros(cls, phi, psi) -> "ConstrainedDensity":
        return cls([], [], [], phi, psi)

    @classmethod
    def from_function(cls, func, phi, psi, cutoff: Optional[float] = None) -> "ConstrainedDensity":
        """Tabulate ``func(site_positions, center_positions) -> values`` on all pairs (or within ``cutoff``)."""
        rows, cols, vals = [], [], []
        geom = phi.geometry
        block = max(1, 2_000_000 // max(len(psi), 1))
        for start in range(0, len(phi), block):
            stop = min(start + block, len(phi))
            if cutoff is not None:
                d = geom.pairwise(phi.positions[start:stop], psi.positions)
                ii, jj = np.nonzero(d <= cutoff)
            else:
                ii, jj = np.divmod(np.arange((stop - start) * len(psi)), len(psi))
            ii = ii + start
            v = np.asarray(func(phi.positions[ii], psi.positions[jj]), dtype=float)
            nz = v != 0
            rows.append(ii[nz]); cols.append(jj[nz]); vals.append(v[nz])
        return cls(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), phi, psi)

    @property
    def n_sites(self) -> int:
        return len(self.phi)

    @property
    def n_centers(self) -> int:
        return len(self.psi)

    @property
    def nnz(self) -> int:
        return len(self.values)

    @property
    def geometry(self):
        return self.phi.geometry

    @property
    def dist(self) -> np.ndarray:
        if self._dist is None:
            geom = self.geometry
            self._dist = geom.distance(self.phi.positions[self.sites], self.psi.positions[self.centers]) \
                if self.nnz else np.zeros(0)
        return self._dist

    def row_sums(self) -> np.ndarray:
        """Outgoing mass ``sum_j f(i, j) w_j`` per site."""
        return np.bincount(self.sites, weights=self.values * self.psi.weights[self.centers],
                           minlength=self.n_sites)

    def col_sums(self) -> np.ndarray:
        """Incoming mass ``sum_i f(i, j) u_i`` per center."""
        return np.bincount(self.centers, weights=self.values * self.phi.weights[self.sites],
                           minlength=self.n_centers)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n_sites, self.n_centers))
        out[self.sites, self.centers] = self.values
        return out

    def value(self, i: int, j: int) -> float:
        lo = np.searchsorted(self.sites, i, side="left")
        hi = np.searchsorted(self.sites, i, side="right")
        k = lo + np.searchsorted(self.centers[lo:hi], j)
        if k < hi and self.centers[k] == j:
            return float(self.values[k])
        return 0.0

    def row(self, i: int):
        """``(centers, values)`` of site ``i``."""
        lo = np.searchsorted(self.sites, i, side="left")
        hi = np.searchsorted(self.sites, i, side="right")
        return self.centers[lo:hi], self.values[lo:hi]

    def column(self, j: int):
        """``(sites, values)`` of center ``j``."""
        mask = self.centers == j
        return self.sites[mask], self.values[mask]

    def transpose(self) -> "ConstrainedDensity":
        """Same function viewed with sites and centers exchanged."""
        return ConstrainedDensity(self.centers, self.sites, self.values, self.psi, self.phi,
                                  role_swap=not self.role_swap)

    def with_values(self, values) -> "ConstrainedDensity":
        return ConstrainedDensity(self.sites, self.centers, values, self.phi, self.psi,
                                  role_swap=self.role_swap, cap=self.cap)

    def max_abs_difference(self, other: "ConstrainedDensity", weighted: bool = False) -> float:
        """Sup norm of ``self - other`` over all pairs (optionally weighted by ``u_i w_j``)."""
        m = self.n_centers
        keys = np.concatenate([self.sites * m + self.centers, other.sites * m + other.centers])
        vals = np.concatenate([self.values, -other.values])
        uniq, inv = np.unique(keys, return_inverse=True)
        diff = np.zeros(len(uniq))
        np.add.at(diff, inv, vals)
        if weighted:
            diff *= self.phi.weights[uniq // m] * self.psi.weights[uniq % m]
        return float(np.abs(diff).max()) if len(diff) else 0.0

    # ------------------------------------------------------------------ I/O

    def to_csv(self, threshold: float = 1e-12, header: Optional[dict] = None) -> str:
        buf = io.StringIO()
        if header:
            buf.write("# " + json.dumps(header, sort_keys=True) + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["site_index", "center_index", "f"])
        keep = self.values > threshold
        for i, j, v in zip(self.sites[keep], self.centers[keep], self.values[keep]):
            writer.writerow([int(i), int(j), repr(float(v))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, phi, psi, **kwargs) -> "ConstrainedDensity":
        header = {}
        rows = []
        for line in text.splitlines():
            if line.startswith("#"):
                header = json.loads(line[1:].strip())
                continue
            if not line.strip() or line.startswith("site_index"):
                continue
            rows.append(line)
        data = list(csv.reader(rows))
        if data:
            arr = np.array(data, dtype=float)
            i, j, v = arr[:, 0].astype(np.int64), arr[:, 1].astype(np.int64), arr[:, 2]
        else:
            i = j = np.zeros(0, dtype=np.int64)
            v = np.zeros(0)
        if len(i) and (i.max() >= len(phi) or j.max() >= len(psi) or i.min() < 0 or j.min() < 0):
            raise ValueError("density CSV references atoms outside the instance")
        dens = cls(i, j, v, phi, psi, **kwargs)
        dens.header = header
        return dens
