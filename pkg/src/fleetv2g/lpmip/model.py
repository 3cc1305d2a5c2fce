"""Linear / mixed-binary model container and solution records."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

import numpy as np

# Solver tolerances, kept in one place.
FEAS_TOL = 1e-8
INT_TOL = 1e-9
OBJ_TOL = 1e-9
PIVOT_TOL = 1e-9
DUAL_TOL = 1e-9


class ModelError(ValueError):
    """Structurally malformed model."""


class Relation(str, Enum):
    LE = "<="
    EQ = "="
    GE = ">="


class Status(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class Row:
    indices: tuple[int, ...]
    coefs: tuple[float, ...]
    relation: Relation
    rhs: float
    name: str = ""


class LpModel:
    """Maximisation model ``max c.x  s.t. rows, lb <= x <= ub``.

    Variables listed in ``binary_indices`` are restricted to {0, 1} by
    :func:`solve_mip`; :func:`solve_lp` ignores integrality.
    """

    def __init__(self) -> None:
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.obj: list[float] = []
        self.names: list[str] = []
        self.rows: list[Row] = []
        self.binary_indices: set[int] = set()

    @property
    def n(self) -> int:
        return len(self.lb)

    @property
    def m(self) -> int:
        return len(self.rows)

    def add_var(
        self,
        lb: float = 0.0,
        ub: float = math.inf,
        obj: float = 0.0,
        name: str | None = None,
        binary: bool = False,
    ) -> int:
        j = len(self.lb)
        if binary:
            lb, ub = max(float(lb), 0.0), min(float(ub), 1.0)
            self.binary_indices.add(j)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.obj.append(float(obj))
        self.names.append(name if name is not None else f"x{j}")
        return j

    def add_row(
        self,
        coefs: Mapping[int, float] | Iterable[tuple[int, float]],
        relation: Relation | str,
        rhs: float,
        name: str = "",
    ) -> int:
        items = coefs.items() if isinstance(coefs, Mapping) else coefs
        merged: dict[int, float] = {}
        for j, a in items:
            merged[int(j)] = merged.get(int(j), 0.0) + float(a)
        idx = tuple(sorted(k for k, v in merged.items() if v != 0.0))
        row = Row(idx, tuple(merged[k] for k in idx), Relation(relation),
                  float(rhs), name or f"r{len(self.rows)}")
        self.rows.append(row)
        return len(self.rows) - 1

    def set_bounds(self, j: int, lb: float, ub: float) -> None:
        self.lb[j] = float(lb)
        self.ub[j] = float(ub)

    def copy(self) -> "LpModel":
        return copy.deepcopy(self)

    def relaxed(self) -> "LpModel":
        out = self.copy()
        out.binary_indices = set()
        return out

    def scaled_objective(self, alpha: float) -> "LpModel":
        out = self.copy()
        out.obj = [alpha * c for c in out.obj]
        return out

    def validate(self) -> None:
        n = self.n
        if not (len(self.ub) == len(self.obj) == len(self.names) == n):
            raise ModelError("variable arrays have inconsistent lengths")
        for j in range(n):
            lo, hi = self.lb[j], self.ub[j]
            if math.isnan(lo) or math.isnan(hi) or lo > hi:
                raise ModelError(f"variable {self.names[j]} has bounds [{lo}, {hi}]")
            if lo == math.inf or hi == -math.inf:
                raise ModelError(f"variable {self.names[j]} has an unreachable bound")
            if not math.isfinite(self.obj[j]):
                raise ModelError(f"variable {self.names[j]} has objective {self.obj[j]}")
        for j in self.binary_indices:
            if not 0 <= j < n:
                raise ModelError(f"binary index {j} out of range")
            if self.lb[j] < 0.0 or self.ub[j] > 1.0:
                raise ModelError(
                    f"binary {self.names[j]} must have bounds within [0, 1], "
                    f"got [{self.lb[j]}, {self.ub[j]}]")
        for row in self.rows:
            for j, a in zip(row.indices, row.coefs):
                if not 0 <= j < n:
                    raise ModelError(f"row {row.name} references variable {j}")
                if not math.isfinite(a):
                    raise ModelError(f"row {row.name} has coefficient {a}")
            if not math.isfinite(row.rhs):
                raise ModelError(f"row {row.name} has rhs {row.rhs}")

    def dense(self) -> tuple[np.ndarray, np.ndarray, list[Relation]]:
        A = np.zeros((self.m, self.n))
        b = np.empty(self.m)
        rel = []
        for i, row in enumerate(self.rows):
            A[i, list(row.indices)] = row.coefs
            b[i] = row.rhs
            rel.append(row.relation)
        return A, b, rel

    def objective_value(self, x: np.ndarray) -> float:
        return float(np.dot(self.obj, x))

    def max_violation(self, x: np.ndarray) -> float:
        """Largest absolute violation of any row or bound at ``x``."""
        worst = 0.0
        lb, ub = np.asarray(self.lb), np.asarray(self.ub)
        if self.n:
            worst = max(worst, float(np.max(lb - x, initial=0.0)),
                        float(np.max(x - ub, initial=0.0)))
        for row in self.rows:
            lhs = sum(a * x[j] for j, a in zip(row.indices, row.coefs))
            if row.relation is Relation.LE:
                worst = max(worst, lhs - row.rhs)
            elif row.relation is Relation.GE:
                worst = max(worst, row.rhs - lhs)
            else:
                worst = max(worst, abs(lhs - row.rhs))
        return worst


@dataclass
class LpSolution:
    status: Status
    objective: float = math.nan
    x: np.ndarray = field(default_factory=lambda: np.empty(0))
    iterations: int = 0


@dataclass
class MipSolution:
    status: Status
    objective: float = math.nan
    x: np.ndarray = field(default_factory=lambda: np.empty(0))
    achieved_gap: float = math.inf
    node_count: int = 0
    bound: float = math.nan


class NodeLimitError(RuntimeError):
    """Branch-and-bound stopped at its node limit before proving the gap."""

    def __init__(self, message: str, incumbent: MipSolution | None):
        super().__init__(message)
        self.incumbent = incumbent
