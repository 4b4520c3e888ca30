"""Traveling fronts of bistable reaction-diffusion equations with temporal memory."""

from .bistable import (BistableProblem, CallbackNonlinearity, CubicNonlinearity, EstimateParams,
                       PolyNonlinearity, area_functional, beta_zero, estimate_params, gamma_star,
                       local_cubic_speed, mckean_speed, reflected, speed_bounds, tilted_roots)
from .errors import *  # noqa: F401,F403
from .evolve import FieldState, RunResult, Stepper, run_to_front, step
from .kernels import (MemoryKernel, convolve_history, delay_comb, exponential, expsum,
                      from_pde_ode, moments, tabulated)
from .twfront import FrontSolution, solve_fixed_point, solve_profile, speed_curve
from .twoscale import (SturmBasis, TwoScaleProblem, kernel_from_coupling, simulate_eps,
                       simulate_two_scale, sturm_solve)

__version__ = "0.1.0"
