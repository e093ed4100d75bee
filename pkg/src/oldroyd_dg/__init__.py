"""Discontinuous Galerkin pressure-correction solver for the Oldroyd model of order one.

The package splits into a mesh of the unit square, orthonormal modal bases
with quadrature, broken polynomial spaces, the discrete bilinear and
trilinear forms, the exponential memory accumulator, sparse solvers, the
time stepper, and a manufactured-solution verification harness.
"""
from .forms import AssembledForm, FormError, FormParams
from .linalg import DirectSolver, SolverError, ZeroMeanSolver
from .memory import KernelParams, MemoryAccumulator, beta
from .mesh import TriMesh, build_uniform_mesh
from .mms import ExactSolution, convergence_study, error_norms, run_mms
from .space import DgSpace, FieldVec, l2_project
from .stepper import ParameterError, PressureCorrection, SchemeParams, StepError

__all__ = [
    "AssembledForm", "FormError", "FormParams",
    "DirectSolver", "SolverError", "ZeroMeanSolver",
    "KernelParams", "MemoryAccumulator", "beta",
    "TriMesh", "build_uniform_mesh",
    "ExactSolution", "convergence_study", "error_norms", "run_mms",
    "DgSpace", "FieldVec", "l2_project",
    "ParameterError", "PressureCorrection", "SchemeParams", "StepError",
]
