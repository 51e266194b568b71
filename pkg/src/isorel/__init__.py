"""Relativistic isothermal Euler equations: Riemann solver, staggered
Lax-Friedrichs scheme, entropy kernels and verification tools."""
from .core import (
    ConservativeState,
    Epsilon,
    FluidState,
    InvariantPair,
    TameRegion,
    conservative,
    from_invariants,
    invariants,
    primitives,
    speeds,
    to_invariants,
)
from .errors import *  # noqa: F401,F403
from .riemann import FanBatch, Rarefaction, Shock, WaveFan, sample, shock_branch, rarefaction_branch, solve_riemann
from .scheme import GridConfig, Slice, Trajectory, run, step
from .kernel import build_kernel_field, chi, entropy_pair, entropy_pairs, sigma_sharp, xi_omega
from .verify import ResidualReport

__version__ = "0.1.0"
