"""Two-dimensional poroelastic benchmark backend (Taylor-Hood elements)."""

from .assembly import BiotDiscretization, assemble_biot, build_biot_system, error_norms
from .manufactured import BiotParameters, ManufacturedProblem, manufactured_problem
from .mesh import TriMesh, build_mesh

__all__ = [
    "BiotDiscretization",
    "BiotParameters",
    "ManufacturedProblem",
    "TriMesh",
    "assemble_biot",
    "build_biot_system",
    "build_mesh",
    "error_norms",
    "manufactured_problem",
]
