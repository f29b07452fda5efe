"""Radially symmetric stationary states and energy minimizers for nonlocal
aggregation with degenerate diffusion, d_t rho = div(rho grad(eps rho^(m-1) - G*rho))."""

__version__ = "0.1.0"

from .energy_minimizer import (MinimizeOptions, MinimizeResult, estimate_epsilon0,
                               estimate_epsilon1, kkt_residual, minimize_global,
                               minimize_in_ball, rayleigh_quotient, threshold_report)
from .errors import *  # noqa: F401,F403
from .linear_eigensolver import (EigenResult, epsilon_of_R_curve, principal_eigenpair,
                                 reconstruct_density, solve_eigen, solve_R_for_epsilon)
from .nonlinear_stationary import (SolverOptions, StationaryResult, energy_identities_check,
                                   epsilon_of_R_curve_nonlinear, residual_el, solve_stationary,
                                   support_bound_check)
from .potential import (RadialPotential, eval_g, eval_g_prime, lp_norm_of_G, make_potential,
                        validate_assumptions)
from .radial_grid import (RadialGrid, RadialProfile, lm_norm_m, make_grid, mass,
                          normalize_mass, resample)
from .shell_kernel import ShellKernels, apply_H, assemble_kernels, boundary_convolution, convolve
