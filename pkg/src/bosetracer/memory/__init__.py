"""Reduced dynamics: memory kernels, oscillatory quadrature, lattice oracles."""

from .filon import (BogoliubovPhase, FilonLegendre, PhaseParams, QuadratureError,
                    endpoint_expansion, oscillatory_integral_batch, oscillatory_rho_integral,
                    spherical_jn_orders)
from .kernels import (AngularRule, KernelTable, d1_kernel, d2_kernel, k_kernel, k_kernel_batch, kernel_D1,
                      kernel_D2, kernel_K, polar_integral, polar_integral_batch)
from .oracles import ExtrapolatedOracle, LatticeOracle
from .reduced import FixedPointError, ReducedRHS, solve_reduced
