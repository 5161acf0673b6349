"""Nonlocal heat equations with the fractional Laplacian in one dimension.

Dense finite-element assembly of the Dirichlet and Robin forms, implicit Euler time
stepping, and executable checks of comparison, positivity, sup-norm and energy
properties of the computed trajectories.
"""
from ._backend import BACKEND
from .assembly import Operators, assemble_dirichlet_stiffness, assemble_flux, assemble_mass, \
    assemble_robin_stiffness, build_operators, load_vector
from .kernel import FracParams, PointField, frac_laplacian_pointwise, \
    nonlocal_normal_derivative_pointwise, normalization_constant
from .mesh import DofMap, Field, Mesh, build_mesh, nodal_interpolate
from .solver import ProblemData, TimeGrid, Trajectory, solve_auxiliary_robin, solve_dirichlet, \
    solve_robin

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "Operators", "assemble_dirichlet_stiffness", "assemble_flux", "assemble_mass",
    "assemble_robin_stiffness", "build_operators", "load_vector", "FracParams", "PointField",
    "frac_laplacian_pointwise", "nonlocal_normal_derivative_pointwise", "normalization_constant",
    "DofMap", "Field", "Mesh", "build_mesh", "nodal_interpolate", "ProblemData", "TimeGrid",
    "Trajectory", "solve_auxiliary_robin", "solve_dirichlet", "solve_robin", "__version__",
]
