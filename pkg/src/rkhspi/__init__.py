"""Optimal value functions of control-affine problems by policy iteration in an RKHS."""

from .care import LinearizedSystem, linearize, lqr_bounds, lqr_feedback, solve_care, solve_lyapunov
from .estimator import RKHSPolicyIteration
from .exceptions import CAREError, DegenerateGramError, TrajectoryEscapeError, WellPosednessError
from .functionals import DirGrad, FunctionalSet, PointEval, cross_gram, gram
from .kernels import (
    KERNEL_NAMES,
    GaussianKernel,
    Kernel,
    LinearMaternKernel,
    QuadraticProductKernel,
    make_kernel,
)
from .ocp import (
    ControlProblem,
    Psd,
    QuadraticBounds,
    feedback,
    ghjb_residual,
    hjb_residual,
    rollout_cost,
    rollout_costs,
    verify_inequalities,
)
from .problems import (
    grid_2d,
    heat_linear,
    heat_nonlinear,
    kansa_discretize,
    linear_quadratic_problem,
    make_problem,
    sample_box,
    toy_problem,
    vdp_problem,
)
from .recovery import Surrogate, rkhs_norm, solve_linear_recovery, surrogate_eval, surrogate_grad
from .rkhs_pi import (
    GreedyConfig,
    PIAbort,
    PIConfig,
    PIHistory,
    build_pe_functionals,
    error_pi,
    greedy_select,
    policy_evaluation,
    policy_improvement,
    res_ghjb,
    run_rkhs_pi,
)

__version__ = "0.1.0"

__all__ = [
    "build_pe_functionals",
    "CAREError",
    "ControlProblem",
    "cross_gram",
    "DegenerateGramError",
    "DirGrad",
    "error_pi",
    "feedback",
    "FunctionalSet",
    "GaussianKernel",
    "ghjb_residual",
    "gram",
    "greedy_select",
    "GreedyConfig",
    "grid_2d",
    "heat_linear",
    "heat_nonlinear",
    "hjb_residual",
    "kansa_discretize",
    "Kernel",
    "KERNEL_NAMES",
    "linear_quadratic_problem",
    "linearize",
    "LinearizedSystem",
    "LinearMaternKernel",
    "lqr_bounds",
    "lqr_feedback",
    "make_kernel",
    "make_problem",
    "PIAbort",
    "PIConfig",
    "PIHistory",
    "PointEval",
    "policy_evaluation",
    "policy_improvement",
    "Psd",
    "QuadraticBounds",
    "QuadraticProductKernel",
    "res_ghjb",
    "rkhs_norm",
    "RKHSPolicyIteration",
    "rollout_cost",
    "rollout_costs",
    "run_rkhs_pi",
    "sample_box",
    "solve_care",
    "solve_linear_recovery",
    "solve_lyapunov",
    "Surrogate",
    "surrogate_eval",
    "surrogate_grad",
    "toy_problem",
    "TrajectoryEscapeError",
    "vdp_problem",
    "verify_inequalities",
    "WellPosednessError",
]
