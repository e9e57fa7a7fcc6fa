"""Interior-penalty dG solver for electrokinetic flow.

Couples an electrostatic potential, two ion concentrations and an
incompressible flow field through drift, convection and the electric
body force; time integration decouples the fields with an implicit-
explicit incremental pressure-correction step.
"""

from .forms import FormParams
from .mesh import BoundaryTag, TriMesh, build_rect_mesh
from .space import BrokenSpace, FieldVector, project_field
from .stepper import Discretization, SchemeConfig, Stepper, SystemState, initial_state

__all__ = [
    "BoundaryTag", "BrokenSpace", "Discretization", "FieldVector",
    "FormParams", "SchemeConfig", "Stepper", "SystemState", "TriMesh",
    "build_rect_mesh", "initial_state", "project_field",
]

__version__ = "0.1.0"
