from .backend import SolverBackend, get_backend, register_backend
from .bnb import (FEASIBLE_TIME_LIMIT, INFEASIBLE, INFEASIBLE_OR_UNBOUNDED, OPTIMAL_STATUS,
                  TIME_LIMIT, BranchAndBound, SolveParams, SolveResult)
from .qp import QPNumericalError, QPResult, qp_solve, solve_relaxation

__all__ = [
    "BranchAndBound", "SolveParams", "SolveResult", "SolverBackend", "get_backend",
    "register_backend", "qp_solve", "solve_relaxation", "QPResult", "QPNumericalError",
    "OPTIMAL_STATUS", "FEASIBLE_TIME_LIMIT", "INFEASIBLE", "INFEASIBLE_OR_UNBOUNDED", "TIME_LIMIT",
]
