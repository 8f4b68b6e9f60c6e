"""Acceptance criteria, one test each, at full size.

Every test prints a single ``PASS``/``FAIL`` line (visible in ``pytest -v``
output) before asserting.  Run ``python tests/test_acceptance.py`` to get
just the ten lines.
"""
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from palm_transport import coupling as cp  # noqa: E402
from palm_transport import golden  # noqa: E402
from palm_transport import transport as tr  # noqa: E402
from palm_transport import voronoi as vo  # noqa: E402
from palm_transport.geometry import Geometry, translate  # noqa: E402
from palm_transport.measures import AtomicMeasure, grid_lebesgue, make_measure  # noqa: E402
from palm_transport.solver import solve_center_optimal, solve_site_optimal  # noqa: E402

from helpers import QUANTUM, generic_torus_instance, quantize  # noqa: E402

pytestmark = pytest.mark.acceptance

TOL = 1e-9


def report(number: int, ok: bool, message: str, capsys=None):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {message}"
    if capsys is not None:
        with capsys.disabled():
            print("\n" + line)
    else:
        print(line)
    return ok


# ------------------------------------------------------------- checks

def criterion_1():
    res = golden.interval(resolution=2000, tol=1e-10)
    secs = res.metrics["seconds"]
    ok = res.passed and secs <= 60
    return ok, f"interval: {res.message}; {secs:.1f} s"


def criterion_2():
    res = golden.z_line(resolution=1100)
    return res.passed, f"integer atoms on a circle: {res.message}"


def criterion_3():
    hexa = golden.z_cross_r(resolution=200)
    sq = golden.square_kernel_check(resolution=200, a=0.55)
    return hexa.passed and sq.passed, f"vertical lines: {hexa.message}; {sq.message}"


def criterion_4():
    res = golden.half_lines(resolution=1500)
    return res.passed, f"half-lines: {res.message}"


def criterion_5():
    res = golden.z_plus_r(resolution=400, period=4)
    return res.passed, f"grid plus integer atoms: {res.message}"


class StageChecker:
    """Asserts ordering, sub-balance and monotone evolution after every stage."""

    def __init__(self, sites, centers, tol=TOL):
        self.u, self.w, self.tol = sites.weights, centers.weights, tol
        self.prev = None
        self.failures = []
        self.stages = 0

    def __call__(self, st):
        self.stages += 1
        A, R, Rp = st.dense("A"), st.dense("R"), st.dense("R_prev")
        t = self.tol
        if not (np.all(R >= -t) and np.all(R <= A + t) and np.all(A <= 1 + t)):
            self.failures.append((st.stage, "ordering"))
        if np.any((A - Rp) @ self.w > 1 + t) or np.any(self.u @ (A - R) > 1 + t):
            self.failures.append((st.stage, "sub-balance"))
        if self.prev is not None:
            pA, pR, pa, pr = self.prev
            if np.any(A < pA - t) or np.any(R < pR - t) or np.any(st.a < pa - t) or np.any(st.r > pr + t):
                self.failures.append((st.stage, "monotone evolution"))
        self.prev = (A, R, st.a.copy(), st.r.copy())


def _generic_failures(seed: int) -> list:
    phi, psi = generic_torus_instance(seed, max_atoms=50, max_cells=500)
    rec = StageChecker(phi, psi)
    res = solve_site_optimal(phi, psi, on_stage=rec)
    f = res.density
    bad = [f"stage {s}: {what}" for s, what in rec.failures[:3]]
    if not res.converged:
        bad.append(f"not converged (residual {res.residual:.2g})")
    if not tr.validate_constrained(f).ok:
        bad.append("constraint violated")
    stab = tr.check_stable(f)
    if not stab.stable:
        bad.append(f"{len(stab.sites)} unstable pairs")
    if not stab.sated_or_exhausted():
        bad.append("unexhausted site next to unsated center")
    if not tr.check_mass_transport(f, rel=1e-9)["ok"]:
        bad.append("mass transport identity")
    v = quantize(np.random.default_rng(seed + 7919).uniform(-20, 20, size=phi.dimension))
    g = solve_site_optimal(translate(phi, v), translate(psi, v)).density
    if not (np.array_equal(f.sites, g.sites) and np.array_equal(f.centers, g.centers)
            and np.array_equal(f.values, g.values)):
        bad.append("translation changed the density")
    return bad


def criterion_6(n_instances: int = 100):
    t0 = time.perf_counter()
    failed = {}
    for seed in range(n_instances):
        bad = _generic_failures(seed)
        if bad:
            failed[seed] = bad
    secs = time.perf_counter() - t0
    ok = not failed and secs <= 600
    detail = "; ".join(f"seed {k}: {', '.join(v)}" for k, v in list(failed.items())[:3])
    return ok, (f"{n_instances - len(failed)}/{n_instances} generic instances satisfy every invariant "
                f"in {secs:.0f} s" + (f" ({detail})" if detail else ""))


def _ordered_pair(phi, psi, rng):
    # heavier sites, lighter centers, one extra site modelled by a null atom
    extra_pos = quantize(rng.uniform(0, phi.geometry.period_array, size=(1, phi.dimension)))
    mu = AtomicMeasure(np.vstack([phi.positions, extra_pos]),
                       np.append(quantize(phi.weights * rng.uniform(1.0, 1.5, len(phi))), 0.5), phi.geometry)
    phi0 = phi.embedded_in(mu)
    nu = psi.with_weights(np.maximum(quantize(psi.weights * rng.uniform(0.5, 1.0, len(psi))), QUANTUM))
    return phi0, psi, mu, nu


def _full_application(res):
    st = res.final_state
    ps = st.structure
    full = st.A >= 1.0
    return ps.i[full], ps.j[full]


def criterion_7(n_instances: int = 20):
    worst_opt = worst_mono = 0.0
    failed = []
    for seed in range(n_instances):
        phi, psi = generic_torus_instance(1000 + seed, max_atoms=30, max_cells=300)
        fs = solve_site_optimal(phi, psi).density
        fc = solve_center_optimal(phi, psi).density
        opt = tr.check_optimality(fc, fs, fc, tol=TOL)
        worst_opt = max(worst_opt, opt["g_upper"], opt["h_lower"])
        phi0, psi0, mu, nu = _ordered_pair(phi, psi, np.random.default_rng(seed))
        base = solve_site_optimal(phi0, psi0)
        f = solve_site_optimal(mu, nu).density
        mono = tr.check_monotonicity(f, base.density, full_application=_full_application(base), tol=TOL)
        worst_mono = max(worst_mono, mono.max_excess)
        if not (opt["ok"] and mono.ok):
            failed.append(seed)
    ok = not failed
    return ok, (f"{n_instances - len(failed)}/{n_instances} instances: g(f_c) <= g(f_s), h(f_s) <= h(f_c) "
                f"(worst {worst_opt:.1e}); monotonicity orderings (worst {worst_mono:.1e}), tol {TOL:g}")


def criterion_8(samples: int = 500):
    t0 = time.perf_counter()
    stats = cp.slivnyak_experiment(intensity=1.0, period=10.0, resolution=100, samples=samples,
                                   radii=(1.0,), seed=20_000)
    secs = time.perf_counter() - t0
    ref = cp.poisson_palm_direct(1.0, 10.0, samples=4 * samples, radii=(1.0,), seed=777)
    mean, se = stats.mean[0], stats.stderr[0]
    near_pi = abs(mean - math.pi) <= 3 * se
    se_diff = math.hypot(se, ref.stderr[0])
    near_ref = abs(mean - ref.mean[0]) <= 3 * se_diff
    all_origin = stats.origin_hits == stats.samples and stats.dropped == 0
    ok = near_pi and near_ref and all_origin and secs <= 1800
    return ok, (f"Palm count in B(0,1): {mean:.3f} +/- {se:.3f} vs pi (|z| = {abs(mean - math.pi) / se:.2f}); "
                f"direct simulation {ref.mean[0]:.3f} +/- {ref.stderr[0]:.3f}; origin an atom in "
                f"{stats.origin_hits}/{samples} samples; {secs:.0f} s")


def criterion_9(samples: int = 50, period: float = 10.0, resolution: int = 50):
    geom = Geometry.torus([period, period])
    phi = grid_lebesgue(geom, resolution=resolution)
    gs, hs, unsated = [], [], []
    for k in range(samples):
        psi = make_measure({"type": "poisson", "intensity": 2.0, "seed": 50_000 + k}, geom)
        f = solve_site_optimal(phi, psi).density
        g, h = cp.spatial_averages(f)
        gs.append(g)
        hs.append(h)
        unsated.append(cp.coupling_cases_check(f)["center_deficit"])
    g, h, left = float(np.mean(gs)), float(np.mean(hs)), float(np.mean(unsated))
    target = (2.0 - 1.0) * geom.volume()
    ok = abs(g - 1.0) <= 0.02 and abs(h - 0.5) <= 0.02 and abs(left - target) <= 0.1 * target
    return ok, (f"spatial averages ({g:.4f}, {h:.4f}) vs (1, 0.5) +/- 0.02; "
                f"unsated center mass {left:.1f} vs {target:.0f} +/- 10%")


def _classical_disagreements(psi: AtomicMeasure, queries: np.ndarray, bisector_tol: float = 1e-9) -> int:
    bad = 0
    for chunk in np.array_split(queries, 20):
        D = np.linalg.norm(chunk[:, None, :] - psi.positions[None, :, :], axis=2)
        order = np.sort(D, axis=1)
        nearest = np.argmin(D, axis=1)
        off_bisector = order[:, 1] - order[:, 0] > bisector_tol
        M = vo.voronoi_matrix(psi, chunk)
        support = M > 0
        expected = np.zeros_like(support)
        expected[np.arange(len(chunk)), nearest] = True
        wrong = np.any(support != expected, axis=1) | (np.abs(M[np.arange(len(chunk)), nearest] - 1) > 0)
        bad += int(np.sum(wrong & off_bisector))
    return bad


def criterion_10(sets: int = 10, queries: int = 100_000):
    E = Geometry.euclidean(2)
    rng = np.random.default_rng(10)
    disagreements = 0
    worst_norm = 0.0
    for _ in range(sets):
        pts = rng.uniform(0, 10, size=(rng.integers(5, 40), 2))
        psi = AtomicMeasure(pts, 1.0, E)
        q = rng.uniform(-2, 12, size=(queries, 2))
        disagreements += _classical_disagreements(psi, q)
        weighted = AtomicMeasure(pts, rng.uniform(0.2, 1.5, len(pts)), E)
        M = vo.voronoi_matrix(weighted, q[:2000])
        worst_norm = max(worst_norm, float(np.max(np.abs(M @ weighted.weights - 1.0))))
    ang = np.pi / 2 + np.array([0.0, 2 * np.pi / 3, 4 * np.pi / 3])
    tri = AtomicMeasure(np.column_stack([np.cos(ang), np.sin(ang)]), 0.5, E)
    diag = vo.territory_diagnostics(tri, 0)
    ok = disagreements == 0 and worst_norm <= 1e-12 and diag.star_shaped and not diag.convex
    return ok, (f"{disagreements} disagreements with classical Voronoi cells over {sets} x {queries} queries; "
                f"max |sum v w - 1| = {worst_norm:.1e}; triangle territory star-shaped={diag.star_shaped}, "
                f"convex={diag.convex}")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10]


@pytest.mark.parametrize("number", range(1, 11))
def test_criterion(number, capsys):
    ok, message = CRITERIA[number - 1]()
    assert report(number, ok, message, capsys), message


if __name__ == "__main__":
    results = [report(k, *fn()) for k, fn in enumerate(CRITERIA, start=1)]
    sys.exit(0 if all(results) else 1)
