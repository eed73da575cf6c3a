"""Interior-point conic solver (nonnegative, second-order and rotated cones)."""

from .ipm import STATUSES, Solution, SolverOptions, kkt_residuals, solve
from .presolve import Presolved, presolve

__all__ = ["STATUSES", "Solution", "SolverOptions", "kkt_residuals", "solve", "Presolved", "presolve"]
