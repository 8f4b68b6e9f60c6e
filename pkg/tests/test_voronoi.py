import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from palm_transport import voronoi as vo
from palm_transport.geometry import Geometry
from palm_transport.measures import AtomicMeasure, make_measure
from palm_transport.solver import PairStructure, application_step
from palm_transport.transport import PreconditionError

from helpers import line

Z = line(np.arange(-10, 11))


def test_radius_examples():
    assert vo.voronoi_radius(Z, [0.6]) == pytest.approx(0.6)
    assert vo.voronoi_radius(Z, [0.0]) == pytest.approx(1.0)
    assert vo.voronoi_radius(line([2.0]), [-7.0]) == math.inf


def test_density_examples():
    i0, i1 = 10, 11  # atoms 0 and 1
    assert vo.voronoi_density(Z, [0.5], i0) == pytest.approx(0.5)
    assert vo.voronoi_density(Z, [0.5], i1) == pytest.approx(0.5)
    assert vo.voronoi_density(Z, [0.4], i0) == 1.0
    assert vo.voronoi_density(Z, [0.6], i0) == 0.0


def test_territory_examples():
    assert vo.in_territory(Z, [0.5], 10)
    assert not vo.in_territory(Z, [0.6], 10)
    for j in (0, 7, 20):
        assert vo.in_territory(Z, Z.positions[j], j)


def test_needs_unit_mass():
    with pytest.raises(PreconditionError):
        vo.voronoi_radius(line([0.0], [0.5]), [0.0])


def _triangle(weight=0.5):
    ang = np.pi / 2 + np.array([0, 2 * np.pi / 3, 4 * np.pi / 3])
    return AtomicMeasure(np.column_stack([np.cos(ang), np.sin(ang)]), weight, Geometry.euclidean(2))


def test_triangle_territory_star_not_convex():
    d = vo.territory_diagnostics(_triangle(), 0)
    assert d.star_shaped and not d.convex


def test_two_atoms_unbounded():
    psi = AtomicMeasure([[0.0, 0.0], [1.0, 0.0]], 1.0, Geometry.euclidean(2))
    assert not vo.territory_diagnostics(psi, 0).bounded


def test_poisson_torus_bounded():
    T = Geometry.torus([8, 8])
    psi = make_measure({"type": "poisson", "intensity": 2.0, "seed": 1}, T)
    diags = [vo.territory_diagnostics(psi, j, rays=90) for j in range(0, len(psi), 10)]
    assert all(d.bounded and d.star_shaped for d in diags)
    assert max(d.max_extent for d in diags) < 4.0 / 2


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_normalization_exact(seed):
    rng = np.random.default_rng(seed)
    g = Geometry.torus([5.0, 5.0])
    psi = AtomicMeasure(rng.uniform(0, 5, size=(15, 2)), rng.uniform(0.2, 1.5, size=15), g)
    q = rng.uniform(0, 5, size=(200, 2))
    M = vo.voronoi_matrix(psi, q)
    assert np.all((M >= 0) & (M <= 1))
    total = M @ psi.weights
    assert np.max(np.abs(total - 1.0)) <= 1e-12


def test_matches_first_application():
    rng = np.random.default_rng(3)
    g = Geometry.torus([4.0])
    psi = AtomicMeasure(rng.uniform(0, 4, size=(12, 1)), rng.uniform(0.3, 1.0, size=12), g)
    sites = AtomicMeasure(rng.uniform(0, 4, size=(30, 1)), 1.0, g)
    ps = PairStructure(sites, psi, np.inf)
    A, *_ = application_step(ps, np.zeros(ps.nnz), np.ones(ps.nnz))
    dense = np.zeros((len(sites), len(psi)))
    dense[ps.i, ps.j] = A
    assert np.allclose(dense, vo.voronoi_matrix(psi, sites.positions), atol=1e-12)


def test_open_ball_agrees_with_density():
    rng = np.random.default_rng(9)
    g = Geometry.torus([6.0, 6.0])
    psi = AtomicMeasure(rng.uniform(0, 6, size=(25, 2)), rng.uniform(0.3, 1.2, size=25), g)
    q = rng.uniform(0, 6, size=(5000, 2))
    M = vo.voronoi_matrix(psi, q)
    for j in range(len(psi)):
        assert np.array_equal(vo.in_territory_many(psi, q, j), M[:, j] > 0)


def test_cell_polygon_and_svg():
    rng = np.random.default_rng(0)
    psi = AtomicMeasure(rng.uniform(0, 1, size=(8, 2)), 1.0, Geometry.euclidean(2))
    cell = vo.VoronoiCell.build(psi, 0)
    assert cell.polyline is not None and len(cell.polyline) >= 3
    assert cell.svg_path().startswith("M ")
    # the polygon centroid lies in the territory
    assert cell.contains(cell.polyline.mean(axis=0))
