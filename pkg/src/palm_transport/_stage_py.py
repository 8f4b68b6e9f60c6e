"""Numpy implementation of the application/rejection updates.

Vectorized over all sites (centers) at once: shell masses are accumulated with
``np.bincount`` and per-owner running sums with a row-wise ``cumsum`` on a
padded ``(owners, shells)`` table.  Both are sequential in pair order, matching
the compiled loops, so results agree bit for bit.  The active lists are not
needed here: recomputing an inactive row reproduces its current values.
"""
from __future__ import annotations

import numpy as np


class _ShellTable:
    """Shell bookkeeping for one side (sites or centers) of a pair list."""

    def __init__(self, ptr: np.ndarray, shell_start: np.ndarray):
        n_owner = len(ptr) - 1
        counts = np.diff(ptr)
        self.shell_id = np.cumsum(shell_start, dtype=np.int64) - 1
        starts = np.nonzero(shell_start)[0]
        self.shell_first = starts
        self.n_shells = len(starts)
        owner_of_pair = np.repeat(np.arange(n_owner), counts)
        self.shell_owner = owner_of_pair[starts]
        self.owner_first_shell = np.searchsorted(starts, ptr[:-1])
        self.shell_col = np.arange(self.n_shells) - self.owner_first_shell[self.shell_owner]
        self.width = int(self.shell_col.max()) + 1 if self.n_shells else 1
        self.n_owner = n_owner
        self.pair_owner = self.shell_owner[self.shell_id]
        self.pair_col = self.shell_col[self.shell_id]

    def boundary(self, shell_mass: np.ndarray, eps: float):
        """First shell per owner whose running mass exceeds 1, and its fill fraction."""
        table = np.zeros((self.n_owner, self.width))
        table[self.shell_owner, self.shell_col] = shell_mass
        cum = np.cumsum(table, axis=1)
        hit = cum > 1.0 + eps
        found = hit.any(axis=1)
        col = np.where(found, hit.argmax(axis=1), self.width)
        rows = np.nonzero(found)[0]
        bc = col[rows]
        acc = np.where(bc > 0, cum[rows, np.maximum(bc - 1, 0)], 0.0)
        s = table[rows, bc]
        t = np.zeros(self.n_owner)
        t[rows] = np.clip((1.0 - acc) / s, 0.0, 1.0)
        return found, col, t


def _tables(ps):
    cache = ps._backend_cache
    if "py" not in cache:
        cache["py"] = (_ShellTable(ps.site_ptr, ps.shell_start_s.astype(bool)),
                       _ShellTable(ps.center_ptr, ps.shell_start_c.astype(bool)))
    return cache["py"]


def _write(target, new, owner_of_pair, mark_index, mark, keep=None):
    diff = new - target
    changed = diff != 0.0
    if keep is not None:
        changed &= keep
    if not changed.any():
        return 0.0
    target[changed] = new[changed]
    mark[mark_index[changed]] = 1
    return float(np.abs(diff[changed]).max())


def application_update(ps, cap_pair, R, A, a, c, a_end, active, eps, changed_center, need):
    sites, _ = _tables(ps)
    mass = (cap_pair - R) * ps.w_pair
    shell_mass = np.bincount(sites.shell_id, weights=mass, minlength=sites.n_shells)
    found, col, t = sites.boundary(shell_mass, eps)

    rows = np.nonzero(found)[0]
    first_shell = sites.owner_first_shell[rows] + col[rows]
    a_new = np.full(ps.n_sites, np.inf)
    a_new[rows] = ps.dist[sites.shell_first[first_shell]]
    c_new = np.ones(ps.n_sites)
    c_new[rows] = 1.0 - t[rows]

    need_now = np.zeros(ps.n_sites, dtype=bool)
    if np.isfinite(ps.limit):
        need_now = ~found | (a_new > ps.limit)
    act = np.zeros(ps.n_sites, dtype=bool)
    act[active] = True
    need_now &= act
    need[need_now] = 1
    ok = act & ~need_now

    owner = sites.pair_owner
    bcol = col[owner]
    A_new = np.where(sites.pair_col < bcol, cap_pair, 0.0)
    on_b = sites.pair_col == bcol
    A_new[on_b] = R[on_b] + t[owner[on_b]] * (cap_pair[on_b] - R[on_b])
    change = _write(A, A_new, owner, ps.j, changed_center, keep=ok[owner])
    a[ok] = a_new[ok]
    c[ok] = c_new[ok]
    return change


def rejection_update(ps, A, R, r, cp, active, eps, changed_site):
    _, centers = _tables(ps)
    A_c = A[ps.perm]
    mass = A_c * ps.u_pair_c
    shell_mass = np.bincount(centers.shell_id, weights=mass, minlength=centers.n_shells)
    found, col, t = centers.boundary(shell_mass, eps)

    owner = centers.pair_owner
    bcol = col[owner]
    R_c = np.where(centers.pair_col > bcol, A_c, 0.0)
    on_b = centers.pair_col == bcol
    R_c[on_b] = (1.0 - t[owner[on_b]]) * A_c[on_b]
    R_new = np.empty_like(R)
    R_new[ps.perm] = R_c
    change = _write(R, R_new, None, ps.i, changed_site)

    rows = np.nonzero(found)[0]
    first_shell = centers.owner_first_shell[rows] + col[rows]
    r[:] = np.inf
    r[rows] = ps.dist[ps.perm[centers.shell_first[first_shell]]]
    cp[:] = 0.0
    cp[rows] = 1.0 - t[rows]
    return change
