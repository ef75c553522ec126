"""Linear stochastic Volterra integral equations under causal feedback.

Forward simulation of the closed-loop system, backward solvers for the
adjoint equation and the Lyapunov-Volterra system, Monte Carlo estimators and
numerical checks of the duality and quadratic representation identities.
"""
from ._backend import BACKEND
from .brownian import BrownianPath, brownian_batch, simulate_brownian
from .ebsvie import (DualityData, EbsvieSolution, GapReport, duality_gap, duality_lhs_exact,
                     duality_rhs, linear_functional, solve_ebsvie)
from .forward import (AugmentedSystem, BlowUpError, FeedbackSolution, InputCondition,
                      SecondMoments, Strategy, build_augmented, flow_restart, propagate_mean,
                      propagate_second_moment, solve_closed_loop_augmented,
                      solve_closed_loop_direct, solve_svie)
from .grid import GridError, PiPair, PyrTensor, TimeGrid, TriField
from .kernels import (Constant, FractionalConvolution, Function, GridKernels, KernelError,
                      KernelSet, Sum, Tabulated, Zero, sample_kernel)
from .lyapunov import (QuadraticWeights, ito_identity, ito_weights, operator_matrix,
                       representation_gap, representation_lhs_exact, representation_rhs,
                       solve_lyapunov)
from .montecarlo import (McConfig, McEstimate, estimate_linear_functional,
                         estimate_quadratic_functional)
from .operators import (compose_feedback, discrete_norms, find_partition, lint, lint_rint, rint,
                        wellposedness_constant, xi_gamma_transform)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "AugmentedSystem", "BlowUpError", "BrownianPath", "Constant", "DualityData",
    "EbsvieSolution", "FeedbackSolution", "FractionalConvolution", "Function", "GapReport",
    "GridError", "GridKernels", "InputCondition", "KernelError", "KernelSet", "McConfig",
    "McEstimate", "PiPair", "PyrTensor", "QuadraticWeights", "SecondMoments", "Strategy", "Sum",
    "Tabulated", "TimeGrid", "TriField", "Zero", "brownian_batch", "build_augmented",
    "compose_feedback", "discrete_norms", "duality_gap", "duality_lhs_exact", "duality_rhs",
    "estimate_linear_functional", "estimate_quadratic_functional", "find_partition",
    "flow_restart", "ito_identity", "ito_weights", "linear_functional", "lint", "lint_rint",
    "operator_matrix", "propagate_mean", "propagate_second_moment", "representation_gap",
    "representation_lhs_exact", "representation_rhs", "rint", "sample_kernel",
    "simulate_brownian", "solve_closed_loop_augmented", "solve_closed_loop_direct",
    "solve_ebsvie", "solve_lyapunov", "solve_svie", "wellposedness_constant",
    "xi_gamma_transform",
]
