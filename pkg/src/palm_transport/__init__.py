"""Stable constrained transport densities between atomic measures."""
from importlib.metadata import PackageNotFoundError, version

from .density import ConstrainedDensity
from .geometry import Geometry
from .measures import AtomicMeasure, make_measure
from .solver import SolveOptions, SolveResult, solve, solve_center_optimal, solve_site_optimal

try:
    __version__ = version("palm-transport")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

__all__ = ["AtomicMeasure", "ConstrainedDensity", "Geometry", "SolveOptions", "SolveResult", "make_measure",
           "solve", "solve_center_optimal", "solve_site_optimal", "__version__"]
