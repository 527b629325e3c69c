"""Lowest-order virtual elements for acoustic eigenfrequencies on polygonal meshes with small edges."""

from . import analysis, eigensolve, mesh, vem
from .analysis import ConvergenceFit, ConvergenceTable, StudyConfig, exact_rectangle, fit_order, run_study, sweep_sigma
from .eigensolve import EigenSolverConfig, Spectrum, recover_frequencies, residual_check, solve
from .mesh import Domain, MeshFamilySpec, PolygonalMesh, generate_family
from .vem import AIR, WATER, MaterialParams, StabilizationKind, assemble, local_matrices, projector_pi_nabla

__version__ = "0.1.0"

__all__ = [
    "AIR",
    "ConvergenceFit",
    "ConvergenceTable",
    "Domain",
    "EigenSolverConfig",
    "MaterialParams",
    "MeshFamilySpec",
    "PolygonalMesh",
    "Spectrum",
    "StabilizationKind",
    "StudyConfig",
    "WATER",
    "analysis",
    "assemble",
    "eigensolve",
    "exact_rectangle",
    "fit_order",
    "generate_family",
    "local_matrices",
    "mesh",
    "projector_pi_nabla",
    "recover_frequencies",
    "residual_check",
    "run_study",
    "solve",
    "sweep_sigma",
    "vem",
]
