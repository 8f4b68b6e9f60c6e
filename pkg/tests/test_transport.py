import math

import numpy as np
import pytest

from palm_transport import transport as tr
from palm_transport.density import ConstrainedDensity
from palm_transport.geometry import Geometry
from palm_transport.measures import AtomicMeasure, grid_lebesgue, make_measure
from palm_transport.solver import solve_center_optimal, solve_site_optimal

from helpers import generic_torus_instance, line, quantize, small_generic_instance


@pytest.fixture(scope="module")
def z_line():
    T = Geometry.torus([11])
    phi = grid_lebesgue(T, resolution=1100)
    psi = AtomicMeasure(np.arange(11).reshape(-1, 1), 1.0, T)
    return solve_site_optimal(phi, psi).density


@pytest.fixture(scope="module")
def half_lines():
    E = Geometry.euclidean(1)
    phi = grid_lebesgue(E, window=[[0, 3]], resolution=300)
    psi = grid_lebesgue(E, window=[[-3, 0]], resolution=300)
    return solve_site_optimal(phi, psi).density


@pytest.fixture(scope="module")
def interval():
    E = Geometry.euclidean(1)
    g = grid_lebesgue(E, window=[[0, 2]], resolution=200)
    return solve_site_optimal(g, g).density, solve_center_optimal(g, g).density


def _site_at(f, x):
    return f.phi.nearest_atom([x])


def test_g_profile_examples(z_line):
    i = _site_at(z_line, 0.2)
    assert tr.g_profile(z_line, i, 0.5) == pytest.approx(1.0)
    assert tr.g_profile(z_line, i, 0.1) == 0.0
    zero = ConstrainedDensity.zeros(z_line.phi, z_line.psi)
    assert tr.g_profile(zero, i, math.inf) == 0.0


def test_h_profile_examples(z_line):
    one = line([0.0])
    f = solve_site_optimal(one, line([0.3])).density
    assert tr.h_profile(f, 0, 0.3) == 1.0
    assert tr.h_profile(f, 0, 0.29) == 0.0
    assert tr.h_profile(z_line, 0, math.inf) == pytest.approx(1.0, abs=1e-9)


def test_validate_constrained_examples(z_line):
    assert tr.validate_constrained(z_line).ok
    bad = z_line.with_values(np.where(np.arange(z_line.nnz) == 3, 1.5, z_line.values))
    kinds = [v["kind"] for v in tr.validate_constrained(bad).violations]
    assert kinds.count("cap") == 1
    two = ConstrainedDensity.from_dense(np.ones((2, 1)), line([0.0, 1.0]), line([0.5]))
    col = [v for v in tr.validate_constrained(two).violations if v["kind"] == "column"]
    assert len(col) == 1 and col[0]["excess"] == pytest.approx(1.0)


def test_check_balanced_examples(z_line, interval):
    assert tr.check_balanced(z_line, 1e-6).balanced
    assert not tr.check_balanced(interval[0], 1e-6).balanced
    zero = ConstrainedDensity.zeros(z_line.phi, z_line.psi)
    rep = tr.check_balanced(zero)
    assert not rep.balanced and rep.max_row_deviation == 1.0


def test_check_stable_examples(z_line):
    assert tr.check_stable(z_line).stable
    zero = ConstrainedDensity.zeros(z_line.phi, z_line.psi)
    rep = tr.check_stable(zero)
    assert len(rep.sites) == zero.n_sites * zero.n_centers
    assert rep.contains(0, 0)


def test_square_kernel_witness_small():
    # the box kernel on a coarse aligned instance: the witness pair desires each other
    from palm_transport import golden
    res = golden.square_kernel_check(resolution=40)
    assert res.passed, res.message


def test_mass_transport_examples(z_line):
    a, b = tr.mass_transport_identity(z_line, math.inf)
    assert a == pytest.approx(b, rel=1e-12)
    a, b = tr.mass_transport_identity(z_line, 0.25)
    assert a == pytest.approx(b, rel=1e-12)
    assert a == pytest.approx(5.5, abs=0.02)
    zero = ConstrainedDensity.zeros(z_line.phi, z_line.psi)
    assert tr.mass_transport_identity(zero, 1.0) == (0.0, 0.0)
    assert tr.check_mass_transport(z_line)["ok"]


def test_monotonicity_identity_case():
    phi, psi = small_generic_instance(2)
    fs = solve_site_optimal(phi, psi).density
    rep = tr.check_monotonicity(fs, fs)
    assert rep.ok and rep.max_excess <= 0.0


def test_monotonicity_extra_site_and_lighter_center():
    phi, psi = small_generic_instance(4)
    extra = AtomicMeasure(np.vstack([phi.positions, quantize([[1.2345]])]),
                          np.append(phi.weights, 0.7), phi.geometry)
    phi0 = phi.embedded_in(extra)            # phi with a null atom where mu has its extra site
    nu = psi.with_weights(np.where(np.arange(len(psi)) == 2, 0.5 * psi.weights, psi.weights))
    fs = solve_site_optimal(phi0, psi).density
    f = solve_site_optimal(extra, nu).density
    assert tr.check_monotonicity(f, fs).ok


def test_monotonicity_rejects_unordered_weights():
    phi, psi = small_generic_instance(4)
    fs = solve_site_optimal(phi, psi).density
    heavier = psi.with_weights(psi.weights * 2)
    f = solve_site_optimal(phi, heavier).density
    with pytest.raises(tr.PreconditionError):
        tr.check_monotonicity(f, fs)


def test_center_optimal_is_worst_for_sites():
    phi, psi = small_generic_instance(5)
    fs = solve_site_optimal(phi, psi).density
    fc = solve_center_optimal(phi, psi).density
    _, _, diff = tr.profile_differences(fc, fs, "site")
    assert diff.max() <= 1e-9
    assert tr.check_optimality(fs, fs, fc)["ok"]


def test_uniqueness_examples(interval):
    assert tr.uniqueness_certificate(*interval)
    one = line([0.0])
    assert tr.uniqueness_certificate(solve_site_optimal(one, one).density,
                                     solve_center_optimal(one, one).density)
    phi, psi = generic_torus_instance(6)
    cert = tr.uniqueness_certificate(solve_site_optimal(phi, psi).density,
                                     solve_center_optimal(phi, psi).density)
    assert cert.certified and cert.density_agrees


def test_allocation_z_line(z_line):
    alloc = tr.extract_allocation(z_line)
    x = z_line.phi.positions[:, 0]
    assert np.array_equal(alloc.target, np.mod(np.rint(x), 11).astype(int))
    assert tr.check_stable_allocation(alloc).stable


def test_allocation_poisson_centers():
    T = Geometry.torus([6, 6])
    psi = make_measure({"type": "poisson", "intensity": 1.0, "seed": 6}, T)
    assert len(psi) != 36  # otherwise cells tile territories exactly
    phi = grid_lebesgue(T, resolution=60, scale=psi.total_mass / T.volume())
    f = solve_site_optimal(phi, psi).density
    cell = phi.weights[0]
    with pytest.raises(tr.PreconditionError):
        tr.extract_allocation(f)
    # cells straddling a territory boundary are split; allow one per center
    alloc = tr.extract_allocation(f, split_mass=len(psi) * cell)
    assert np.all(np.abs(alloc.preimage_mass() - 1.0) <= len(alloc.split_sites) * cell + 1e-9)
    assert np.allclose(f.col_sums(), 1.0, atol=1e-9)


def test_allocation_needs_discrete_centers(half_lines):
    with pytest.raises(tr.PreconditionError):
        tr.extract_allocation(half_lines)


def test_swapped_allocation_unstable():
    phi, psi = small_generic_instance(7, 6, 6)
    unit = psi.with_weights(np.ones(len(psi)))
    sites = phi.with_weights(np.ones(len(phi)))
    alloc = tr.extract_allocation(solve_site_optimal(sites, unit).density)
    assert tr.check_stable_allocation(alloc).stable
    swapped = alloc.target.copy()
    a, b = np.nonzero(swapped >= 0)[0][:2]
    swapped[[a, b]] = swapped[[b, a]]
    bad = tr.Allocation(swapped, alloc.phi, alloc.psi)
    assert not tr.check_stable_allocation(bad).stable


def test_single_pair_allocation():
    one = line([0.0])
    alloc = tr.extract_allocation(solve_site_optimal(one, one).density)
    assert alloc.target[0] == 0 and tr.check_stable_allocation(alloc).stable


def test_kernel_apply_examples(z_line, half_lines):
    assert tr.kernel_apply(z_line) == pytest.approx(z_line.psi.total_mass)
    view = tr.TransportKernelView(z_line)
    assert tr.kernel_apply(z_line, centers=[3]) <= z_line.psi.weights[3] + 1e-12
    assert view(0) == pytest.approx(1.0) and view.target_mass([3]) == 1.0
    f = half_lines
    S = np.nonzero(f.phi.positions[:, 0] <= 1)[0]
    B = np.nonzero(f.psi.positions[:, 0] >= -1)[0]
    assert tr.kernel_apply(f, S, B) == pytest.approx(math.fsum(f.phi.weights[S]), rel=1e-9)


def test_territories_bounded(z_line):
    rep = tr.territory_report(z_line)
    assert rep["bounded"] and rep["max_site_radius"] <= 0.5 + 1e-9


def test_reports_serialize(z_line):
    import json
    rep = tr.check_stable(z_line)
    json.dumps(rep.to_dict())
    json.dumps(tr.validate_constrained(z_line).to_dict())
    assert rep.pairs_csv().startswith("site")
