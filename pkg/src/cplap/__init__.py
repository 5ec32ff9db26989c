"""Finite-element laboratory for -div(a (eps^2+|grad u|^2)^((p-2)/2) grad u) = -div F with complex data."""

from .complex_fields import CMat, RealMat2N, check, cinner, cnorm, hat
from .mesh import FEFunction, QuadRule, RectGrid
from .solver import SolveReport, SolverConfig, solve_dirichlet
from .structure import FluxParams, c1_of, c2_of, flux

__all__ = [
    "CMat", "RealMat2N", "cinner", "hat", "check", "cnorm",
    "FluxParams", "flux", "c1_of", "c2_of",
    "RectGrid", "FEFunction", "QuadRule",
    "SolverConfig", "SolveReport", "solve_dirichlet",
]
