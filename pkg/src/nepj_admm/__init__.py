"""Jacobi-type non-Euclidean proximal ADMM with runtime certificates."""

from .bregman import CancelCoupling, Diagonal, Euclidean, bregman_distance, certify_moduli
from .errors import *  # noqa: F401,F403
from .functions import BoxIndicator, FiniteSetIndicator, L1Norm, ProxCustom, Quadratic, SmoothCustom
from .linalg import LinOp, project_onto_range_adjoint, range_contains, spectral_summary
from .params import SolverConfig, auto_tune, make_config, rate_constants
from .problem import Problem, evaluate_objective, feasibility_residual, validate
from .io import dump_problem, load_problem
from .solver import JacobiADMM, run, step

__version__ = "0.1.0"

__all__ = [
    "CancelCoupling",
    "Diagonal",
    "Euclidean",
    "bregman_distance",
    "certify_moduli",
    "BoxIndicator",
    "FiniteSetIndicator",
    "L1Norm",
    "ProxCustom",
    "Quadratic",
    "SmoothCustom",
    "LinOp",
    "project_onto_range_adjoint",
    "range_contains",
    "spectral_summary",
    "SolverConfig",
    "auto_tune",
    "make_config",
    "rate_constants",
    "Problem",
    "evaluate_objective",
    "feasibility_residual",
    "validate",
    "JacobiADMM",
    "run",
    "step",
    "load_problem",
    "dump_problem",
]
