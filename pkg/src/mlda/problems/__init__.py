"""Benchmark forward-model hierarchies."""

from .base import LinearGaussianProblem, Problem, generate_synthetic_data
from .darcy import DarcyProblem, darcy_solve
from .gravity import GravityProblem, assemble_gravity_matrix, gravity_forward
from .ode import IntegrationError, integrate_rk45
from .predator_prey import PredatorPreyProblem

__all__ = [
    "DarcyProblem",
    "GravityProblem",
    "IntegrationError",
    "LinearGaussianProblem",
    "PredatorPreyProblem",
    "Problem",
    "assemble_gravity_matrix",
    "darcy_solve",
    "generate_synthetic_data",
    "gravity_forward",
    "integrate_rk45",
]
