"""MILP solving: bounded simplex, branch-and-bound, HiGHS backend, MPS I/O."""

from .backend import BACKENDS, solve_model
from .bnb import MipResult, solve_mip
from .highs import solve_mip_highs
from .mps import MpsParseError, read_mps, write_mps
from .simplex import BoundedSimplex, LpSolution, solve_lp

__all__ = ["BACKENDS", "BoundedSimplex", "LpSolution", "MipResult", "MpsParseError", "read_mps",
           "solve_lp", "solve_mip", "solve_mip_highs", "solve_model", "write_mps"]
