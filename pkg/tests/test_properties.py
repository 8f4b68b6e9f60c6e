"""Structural invariants on randomly generated instances."""
import numpy as np
from hypothesis import HealthCheck, given, settings, strategies as st

from palm_transport import transport as tr
from palm_transport.geometry import Geometry
from palm_transport.measures import AtomicMeasure
from palm_transport.solver import solve_center_optimal, solve_site_optimal

from helpers import QUANTUM, generic_torus_instance, quantize

SETTINGS = settings(max_examples=30, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@st.composite
def small_instances(draw):
    d = draw(st.sampled_from([1, 2]))
    period = draw(st.sampled_from([2.0, 3.0, 5.0]))
    geom = Geometry.torus([period] * d)
    n = draw(st.integers(1, 25))
    m = draw(st.integers(1, 12))
    coord = st.floats(0, period, exclude_max=True, allow_nan=False)
    sites = quantize(draw(st.lists(st.tuples(*[coord] * d), min_size=n, max_size=n)))
    centers = quantize(draw(st.lists(st.tuples(*[coord] * d), min_size=m, max_size=m)))
    weight = st.floats(0.05, 2.0)
    u = quantize(draw(st.lists(weight, min_size=n, max_size=n)))
    w = quantize(draw(st.lists(weight, min_size=m, max_size=m)))
    return AtomicMeasure(sites, np.maximum(u, QUANTUM), geom), AtomicMeasure(centers, np.maximum(w, QUANTUM), geom)


@SETTINGS
@given(small_instances())
def test_solution_is_stable_constrained_density(inst):
    phi, psi = inst
    res = solve_site_optimal(phi, psi)
    f = res.density
    assert res.converged
    assert tr.validate_constrained(f).ok
    rep = tr.check_stable(f)
    assert rep.stable
    assert rep.sated_or_exhausted()
    assert tr.check_mass_transport(f)["ok"]


@SETTINGS
@given(small_instances())
def test_center_optimal_bounds_site_optimal(inst):
    phi, psi = inst
    fs = solve_site_optimal(phi, psi).density
    fc = solve_center_optimal(phi, psi).density
    assert tr.check_stable(fc).stable
    opt = tr.check_optimality(fs, fs, fc)
    assert opt["ok"], opt


@SETTINGS
@given(small_instances())
def test_transpose_symmetry(inst):
    # the center-optimal density is the site-optimal one with the roles swapped
    phi, psi = inst
    fc = solve_center_optimal(phi, psi).density
    swapped = solve_site_optimal(psi, phi).density.transpose()
    assert np.array_equal(fc.to_dense(), swapped.to_dense())


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_generic_instances_have_unique_stable_density(seed):
    phi, psi = generic_torus_instance(seed, max_atoms=20, max_cells=150)
    fs = solve_site_optimal(phi, psi).density
    fc = solve_center_optimal(phi, psi).density
    cert = tr.uniqueness_certificate(fs, fc)
    assert cert.certified and cert.density_agrees


@SETTINGS
@given(small_instances(), st.integers(0, 2 ** 20))
def test_weight_monotonicity(inst, salt):
    # more site weight and less center weight: the site profile can only shrink
    phi, psi = inst
    rng = np.random.default_rng(salt)
    mu = phi.with_weights(quantize(phi.weights * rng.uniform(1.0, 2.0, len(phi))))
    nu = psi.with_weights(np.maximum(quantize(psi.weights * rng.uniform(0.3, 1.0, len(psi))), QUANTUM))
    fs = solve_site_optimal(phi, psi).density
    f = solve_site_optimal(mu, nu).density
    assert tr.check_monotonicity(f, fs).ok
