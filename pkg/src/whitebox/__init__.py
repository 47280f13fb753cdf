"""Surrogate-assisted black-box optimization with online whitening."""

from .hessian import HessianEstimate, estimate_hessian
from .optimizer import OptimizerConfig, RunTrace, run_de, run_sacobra, run_sacobra_ow, run_solver
from .rbf import RbfModel, fit, predict
from .testbed import CountingObjective, ProblemInstance, evaluate, make_problem, problem_from_id
from .whitening import WhitenedObjective, WhiteningTransform, apply, build_whitening, pull_back

__all__ = [
    "CountingObjective", "HessianEstimate", "OptimizerConfig", "ProblemInstance", "RbfModel",
    "RunTrace", "WhitenedObjective", "WhiteningTransform", "apply", "build_whitening",
    "estimate_hessian", "evaluate", "fit", "make_problem", "predict", "problem_from_id",
    "pull_back", "run_de", "run_sacobra", "run_sacobra_ow", "run_solver",
]
__version__ = "0.1.0"
