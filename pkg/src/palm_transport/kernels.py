"""Backend selection for the stage sweeps.

The compiled extension is used when it imports; otherwise the numpy version.
Set ``PALM_TRANSPORT_BACKEND=python`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _stage_py

try:
    from . import _stage_ext
except ImportError:  # extension not built
    _stage_ext = None


def available_backends() -> list:
    return ["python"] + (["compiled"] if _stage_ext is not None else [])


def default_backend() -> str:
    forced = os.environ.get("PALM_TRANSPORT_BACKEND", "").strip().lower()
    if forced in ("python", "numpy"):
        return "python"
    if forced == "compiled" and _stage_ext is None:
        raise ImportError("compiled backend requested but palm_transport._stage_ext is not built")
    return "compiled" if _stage_ext is not None else "python"


BACKEND = default_backend()


def application_update(ps, cap_pair, R, A, a, c, a_end, active, eps, changed_center, need, backend=None):
    """Recompute application rows of the ``active`` sites in place; returns the max change."""
    backend = backend or BACKEND
    if backend == "compiled":
        return _stage_ext.application_update(ps.site_ptr, ps.shell_start_s, ps.dist, ps.w_pair, cap_pair,
                                             ps.j, R, A, a, c, a_end, active, ps.limit, eps,
                                             changed_center, need)
    return _stage_py.application_update(ps, cap_pair, R, A, a, c, a_end, active, eps, changed_center, need)


def rejection_update(ps, A, R, r, cp, active, eps, changed_site, backend=None):
    """Recompute rejection columns of the ``active`` centers in place; returns the max change."""
    backend = backend or BACKEND
    if backend == "compiled":
        return _stage_ext.rejection_update(ps.center_ptr, ps.perm, ps.shell_start_c, ps.dist, ps.u_pair_c,
                                           ps.i, A, R, r, cp, active, eps, changed_site)
    return _stage_py.rejection_update(ps, A, R, r, cp, active, eps, changed_site)
