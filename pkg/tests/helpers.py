"""Instance generators shared by the test modules."""
import numpy as np

from palm_transport.geometry import Geometry
from palm_transport.measures import AtomicMeasure

# coordinates on a 2^-30 grid: translating by another such vector is exact
QUANTUM = 2.0 ** -30


def quantize(x):
    return np.round(np.asarray(x, dtype=float) / QUANTUM) * QUANTUM


def atoms(geom, positions, weights=1.0):
    return AtomicMeasure(np.asarray(positions, dtype=float), weights, geom)


def line(points, weights=1.0):
    return atoms(Geometry.euclidean(1), np.asarray(points, dtype=float).reshape(-1, 1), weights)


def generic_torus_instance(seed: int, max_atoms: int = 50, max_cells: int = 500):
    """Jittered grid sites and random weighted centers on a small torus.

    Dimension alternates with the seed; masses are deliberately unequal on
    about half of the instances so that unexhausted or unsated mass occurs.
    """
    rng = np.random.default_rng(seed)
    d = 1 + seed % 2
    period = float(rng.choice([3.0, 4.0, 5.0]))
    geom = Geometry.torus([period] * d)
    if d == 1:
        n = int(rng.integers(40, max_cells + 1))
    else:
        n = int(rng.integers(6, int(np.sqrt(max_cells)) + 1))
    h = period / n
    axes = [(np.arange(n) + 0.5) * h] * d
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    grid = quantize(grid + rng.uniform(-1e-3 * h, 1e-3 * h, size=grid.shape))

    m = int(rng.integers(3, max_atoms + 1))
    centers = quantize(rng.uniform(0.0, period, size=(m, d)))
    if rng.random() < 0.5:
        w = np.ones(m)
    else:
        w = quantize(rng.uniform(0.3, 1.5, size=m))
    psi = AtomicMeasure(centers, w, geom)
    ratio = 1.0 if rng.random() < 0.5 else float(rng.uniform(0.5, 2.0))
    cell_mass = ratio * psi.total_mass / len(grid)
    phi = AtomicMeasure(grid, cell_mass, geom)
    return phi, psi


def small_generic_instance(seed: int, n_sites: int = 6, n_centers: int = 6, period: float = 4.0):
    """A handful of atoms in generic position on a 1-d torus, unit center weights."""
    rng = np.random.default_rng(seed)
    geom = Geometry.torus([period])
    sites = quantize(rng.uniform(0, period, size=(n_sites, 1)))
    centers = quantize(rng.uniform(0, period, size=(n_centers, 1)))
    phi = AtomicMeasure(sites, quantize(rng.uniform(0.4, 1.2, size=n_sites)), geom)
    psi = AtomicMeasure(centers, quantize(rng.uniform(0.4, 1.2, size=n_centers)), geom)
    return phi, psi
