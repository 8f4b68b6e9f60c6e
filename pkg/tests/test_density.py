import numpy as np
import pytest

from palm_transport.density import ConstrainedDensity
from palm_transport.geometry import Geometry
from palm_transport.measures import AtomicMeasure

from helpers import line


def test_dense_round_trip_and_sums():
    phi, psi = line([0.0, 1.0], [0.5, 0.25]), line([0.5, 2.0], [2.0, 1.0])
    M = np.array([[0.25, 0.5], [0.0, 1.0]])
    f = ConstrainedDensity.from_dense(M, phi, psi)
    assert np.array_equal(f.to_dense(), M) and f.nnz == 3
    assert np.allclose(f.row_sums(), M @ psi.weights)
    assert np.allclose(f.col_sums(), phi.weights @ M)
    assert f.value(1, 0) == 0.0 and f.value(0, 1) == 0.5
    assert np.array_equal(f.transpose().to_dense(), M.T)


def test_csv_round_trip():
    phi, psi = line([0.0, 1.0]), line([0.5])
    f = ConstrainedDensity.from_dense(np.array([[0.1 + 0.2], [1e-13]]), phi, psi)
    text = f.to_csv(header={"tol": 1e-12})
    g = ConstrainedDensity.from_csv(text, phi, psi)
    assert g.header == {"tol": 1e-12}
    assert g.value(0, 0) == 0.1 + 0.2  # repr keeps every bit
    assert g.nnz == 1  # entries below 1e-12 are dropped


def test_csv_rejects_foreign_indices():
    phi, psi = line([0.0]), line([0.5])
    with pytest.raises(ValueError):
        ConstrainedDensity.from_csv("site_index,center_index,f\n3,0,1.0\n", phi, psi)


def test_from_function():
    g = Geometry.torus([4.0])
    phi = AtomicMeasure(np.arange(8)[:, None] / 2, 0.5, g)
    psi = AtomicMeasure(np.arange(4)[:, None].astype(float), 1.0, g)
    f = ConstrainedDensity.from_function(lambda x, xi: (g.distance(x, xi) < 0.5).astype(float), phi, psi)
    assert np.allclose(f.row_sums()[::2], 1.0)


def test_geometry_mismatch():
    with pytest.raises(ValueError):
        ConstrainedDensity.zeros(line([0.0]), AtomicMeasure([[0.0]], 1.0, Geometry.torus([1.0])))
