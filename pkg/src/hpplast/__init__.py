"""hp finite elements for elastoplasticity with linear kinematic hardening.

Mixed formulation with Gauss-Legendre-Lagrange / biorthogonal bases for the
plastic strain and its multiplier, solved as a decoupled nonsmooth system by
a semismooth Newton method.
"""

from .tensors import MaterialLaw, basis_S, deviator, reconstruct
from .mesh import HpMesh, unit_square, read_mesh, write_mesh, refine_uniform
from .quadrature import gauss_rule, gauss_lobatto
from .hp_spaces import DofSystem, DisplacementSpace, QhpField, DisplacementField
from .assembly import LoadData, SaddleSystem, assemble_blocks
from .solver import SolverConfig, NewtonState, SolveReport, newton_solve

__all__ = [
    "MaterialLaw",
    "basis_S",
    "deviator",
    "reconstruct",
    "HpMesh",
    "unit_square",
    "read_mesh",
    "write_mesh",
    "refine_uniform",
    "gauss_rule",
    "gauss_lobatto",
    "DofSystem",
    "DisplacementSpace",
    "QhpField",
    "DisplacementField",
    "LoadData",
    "SaddleSystem",
    "assemble_blocks",
    "SolverConfig",
    "NewtonState",
    "SolveReport",
    "newton_solve",
]

__version__ = "0.1.0"
