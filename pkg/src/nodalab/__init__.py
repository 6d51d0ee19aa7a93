"""Numerical laboratory for frequency functions, doubling indices and nodal sets
of solutions to ``Δu + V u = 0`` with Dirichlet data."""

from .doubling import ChartView, Cube, cube_doubling, doubling_index, doubling_ladder
from .field import Potential, SolutionField, closed_form_solution, solve_eigenpair, solve_eigenpairs
from .frequency import evaluate_frequency, frequency_profile
from .geometry import DomainSpec, build_domain, collar_params, straighten
from .lifted import LiftedField, lift
from .nodal import extract_nodal

__version__ = "0.1.0"

__all__ = [
    "ChartView",
    "Cube",
    "DomainSpec",
    "LiftedField",
    "Potential",
    "SolutionField",
    "build_domain",
    "closed_form_solution",
    "collar_params",
    "cube_doubling",
    "doubling_index",
    "doubling_ladder",
    "evaluate_frequency",
    "extract_nodal",
    "frequency_profile",
    "lift",
    "solve_eigenpair",
    "solve_eigenpairs",
    "straighten",
]
