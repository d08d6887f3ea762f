"""Sparse actuator selection for fuselage shape control.

Solves ``min ||Y - X beta||_inf + lam ||beta||_1`` by ADMM, bisects ``lam``
to meet an actuator budget, and refits the unpenalized max-gap problem on the
selected actuators.
"""

from .admm import AdmmConfig, AdmmResult, SplitProblem, solve_penalized, solve_refit
from .errors import FeasibilityError, InvalidArgumentError, NumericalError
from .problem import (
    AssemblyProblem,
    ControlSolution,
    build_regression,
    lambda_upper_bound,
    load_bundle,
    save_bundle,
    select_actuators,
    solve_pair,
)
from .prox import project_l1_ball, prox_affine, prox_linf, soft_threshold

__all__ = [
    "AdmmConfig",
    "AdmmResult",
    "SplitProblem",
    "solve_penalized",
    "solve_refit",
    "FeasibilityError",
    "InvalidArgumentError",
    "NumericalError",
    "AssemblyProblem",
    "ControlSolution",
    "build_regression",
    "lambda_upper_bound",
    "load_bundle",
    "save_bundle",
    "select_actuators",
    "solve_pair",
    "project_l1_ball",
    "prox_affine",
    "prox_linf",
    "soft_threshold",
]
