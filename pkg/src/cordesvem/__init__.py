"""H2-conforming virtual elements for A:D2u = f under the Cordes condition."""

from .analysis import ConvergenceReport, ErrorTriple, eoc, eoc_ndof, error_norms, run_study
from .assembly import GlobalSystem, Solution, assemble, interpolate, solve_direct
from .cordes import CoefficientField, admissible_scaling, cordes_residual, satisfies_cordes, verify_field
from .element import LocalElement
from .mesh import (
    MeshFamily,
    PolygonalMesh,
    build_graded_mesh,
    build_uniform_square_mesh,
    build_voronoi_mesh,
    read_mesh,
    write_mesh,
)
from .problems import ProblemDefinition, get_problem, patch_problem

__all__ = [
    "CoefficientField", "ConvergenceReport", "ErrorTriple", "GlobalSystem", "LocalElement",
    "MeshFamily", "PolygonalMesh", "ProblemDefinition", "Solution", "admissible_scaling",
    "assemble", "build_graded_mesh", "build_uniform_square_mesh", "build_voronoi_mesh",
    "cordes_residual", "eoc", "eoc_ndof", "error_norms", "get_problem", "interpolate",
    "patch_problem", "read_mesh", "run_study", "satisfies_cordes", "solve_direct",
    "verify_field", "write_mesh",
]
