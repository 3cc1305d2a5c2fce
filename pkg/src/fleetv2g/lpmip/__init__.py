"""Exact LP/MIP kernel: bounded-variable simplex plus binary branch-and-bound."""

from .bnb import DEFAULT_GAP, solve_mip
from .lpformat import read_lp, write_lp
from .model import (
    FEAS_TOL, INT_TOL, OBJ_TOL, LpModel, LpSolution, MipSolution, ModelError,
    NodeLimitError, Relation, Row, Status,
)
from .simplex import solve_lp

__all__ = [
    "DEFAULT_GAP", "FEAS_TOL", "INT_TOL", "OBJ_TOL", "LpModel", "LpSolution",
    "MipSolution", "ModelError", "NodeLimitError", "Relation", "Row", "Status",
    "read_lp", "solve_lp", "solve_mip", "write_lp",
]
