"""Serendipity virtual element solver for second-order elliptic problems on polygonal meshes."""

from .assembly import SolverError, assemble, interpolate, solve, solve_problem
from .element import (
    ElementOperators,
    PropertySViolation,
    SerendipityStrategy,
    build_dof_layout,
    element_operators,
)
from .experiments import ConvergenceReport, dof_report, error_norms, run_convergence
from .geometry import InvalidGeometry, Polygon, UnsupportedShape
from .meshes import Mesh, gen_square_grid, gen_trapezoid_grid, gen_voronoi_lloyd, read_mesh, write_mesh
from .problems import ModelProblem, get_problem

__version__ = "0.1.0"
