"""Constrained minimization of the discrete Willmore energy of triangle meshes.

The package provides a triangle-mesh representation with OBJ/PLY I/O and Loop
subdivision, assembly of the discrete surface operators (mass, cotangent
stiffness, lumped inverse mass, H2-Riesz operator), an equality-constraint
stack (barycenter, total area, enclosed volume, Dirichlet boundary), bordered
saddle-point solvers, and the projected H2-gradient descent loop with a
circular second-order search path, backtracking line search and Newton-type
constraint restoration.
"""

from .mesh import (
    DofMap,
    MeshError,
    TriMesh,
    load_mesh,
    loop_subdivide,
    save_mesh,
    triangle_geometry,
)
from .fem import (
    Operators,
    assemble_J,
    assemble_lumped_inverse,
    assemble_mass,
    assemble_stiffness,
    directional_system_derivatives,
    discrete_willmore,
    energy_gradient_rhs,
    mean_curvature_vector,
)
from .constraints import (
    Barycenter,
    ConstraintError,
    ConstraintEval,
    ConstraintSet,
    EnclosedVolume,
    TotalArea,
)
from .saddle import (
    SaddleResidualError,
    SaddleSolution,
    SaddleSystem,
    SingularSaddleError,
    dense_pinv_oracle,
    dense_projection_oracle,
)
from .descent import (
    DescentConfig,
    DescentError,
    DescentState,
    HistoryRecord,
    LineSearchStall,
    RestorationError,
    SearchPath,
    run,
    semi_implicit_step,
)

__version__ = "0.1.0"

__all__ = [
    "Barycenter",
    "ConstraintError",
    "ConstraintEval",
    "ConstraintSet",
    "DescentConfig",
    "DescentError",
    "DescentState",
    "DofMap",
    "EnclosedVolume",
    "HistoryRecord",
    "LineSearchStall",
    "MeshError",
    "Operators",
    "RestorationError",
    "SaddleResidualError",
    "SaddleSolution",
    "SaddleSystem",
    "SearchPath",
    "SingularSaddleError",
    "TotalArea",
    "TriMesh",
    "assemble_J",
    "assemble_lumped_inverse",
    "assemble_mass",
    "assemble_stiffness",
    "dense_pinv_oracle",
    "dense_projection_oracle",
    "directional_system_derivatives",
    "discrete_willmore",
    "energy_gradient_rhs",
    "load_mesh",
    "loop_subdivide",
    "mean_curvature_vector",
    "run",
    "save_mesh",
    "semi_implicit_step",
    "triangle_geometry",
]
