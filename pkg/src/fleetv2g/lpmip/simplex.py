"""Dense bounded-variable primal and dual simplex.

Every row ``a.x (rel) b`` gets a slack ``s`` with ``a.x + s = b`` and bounds
chosen by the relation (``<=``: s >= 0, ``>=``: s <= 0, ``=``: s = 0), so the
working system is ``M z = b`` with box bounds on every column; variable bounds
never appear as rows. Nonbasic columns sit at a finite bound (or at zero when
free). Pricing is Dantzig's largest reduced cost; after ``STALL_LIMIT``
consecutive degenerate pivots both entering and leaving choices switch to
Bland's smallest-index rule until the objective moves again.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import (
    DUAL_TOL, FEAS_TOL, OBJ_TOL, PIVOT_TOL, LpModel, LpSolution, Relation, Status,
)

STALL_LIMIT = 50
REFACTOR_EVERY = 100
MAX_ITER = 50_000
_TIE = 1e-12
PIVOT_REL = 1e-7    # entries below this times the column norm are treated as zero
SUSPECT_REL = 1e-6  # smaller chosen pivots are re-checked on a fresh factorization


@dataclass
class Reduced:
    """A model with fixed columns and empty rows stripped out."""

    A: np.ndarray
    b: np.ndarray
    rel: list[Relation]
    lb: np.ndarray
    ub: np.ndarray
    c: np.ndarray
    keep: np.ndarray
    full_x: np.ndarray
    offset: float
    binaries: list[int]
    infeasible: str | None = None

    def expand(self, x_red: np.ndarray) -> np.ndarray:
        x = self.full_x.copy()
        x[self.keep] = x_red
        return x


def presolve(model: LpModel) -> Reduced:
    lb = np.asarray(model.lb, dtype=float)
    ub = np.asarray(model.ub, dtype=float)
    c = np.asarray(model.obj, dtype=float)
    fixed = lb == ub
    full_x = np.where(fixed, lb, 0.0)
    keep = np.flatnonzero(~fixed)
    pos = -np.ones(model.n, dtype=int)
    pos[keep] = np.arange(keep.size)

    rows_A, rows_b, rows_rel = [], [], []
    infeasible = None
    for row in model.rows:
        rhs = row.rhs
        entries = []
        for j, a in zip(row.indices, row.coefs):
            if fixed[j]:
                rhs -= a * full_x[j]
            else:
                entries.append((pos[j], a))
        if not entries:
            ok = {
                Relation.LE: rhs >= -FEAS_TOL,
                Relation.GE: rhs <= FEAS_TOL,
                Relation.EQ: abs(rhs) <= FEAS_TOL,
            }[row.relation]
            if not ok and infeasible is None:
                infeasible = f"row {row.name} cannot be satisfied (0 {row.relation.value} {rhs:g})"
            continue
        dense = np.zeros(keep.size)
        for k, a in entries:
            dense[k] += a
        rows_A.append(dense)
        rows_b.append(rhs)
        rows_rel.append(row.relation)

    A = np.array(rows_A).reshape(len(rows_A), keep.size)
    binaries = sorted(int(pos[j]) for j in model.binary_indices if not fixed[j])
    return Reduced(
        A=A, b=np.array(rows_b, dtype=float), rel=rows_rel,
        lb=lb[keep], ub=ub[keep], c=c[keep], keep=keep, full_x=full_x,
        offset=float(np.dot(c[fixed], full_x[fixed])), binaries=binaries,
        infeasible=infeasible,
    )


class Tableau:
    """Simplex state on ``M z = b``: tableau ``B^-1 M``, values and reduced costs."""

    def __init__(self, M, b, L, U, c, basis, x, n_struct):
        self.M = M
        self.b = b
        self.L = L
        self.U = U
        self.c = c
        self.basis = basis
        self.x = x
        self.n_struct = n_struct
        self.is_basic = np.zeros(M.shape[1], dtype=bool)
        self.is_basic[basis] = True
        self.iterations = 0
        self._since_refactor = 0
        self.refactor()

    # -- construction -----------------------------------------------------

    @classmethod
    def initial(cls, red: Reduced) -> tuple["Tableau", int]:
        """Slack/artificial starting basis; returns the tableau and artificial count."""
        A, b = red.A, red.b
        m, n = A.shape
        sl = np.array([-math.inf if r is Relation.GE else 0.0 for r in red.rel])
        su = np.array([math.inf if r is Relation.LE else 0.0 for r in red.rel])

        xs = np.where(np.isfinite(red.lb), red.lb, np.where(np.isfinite(red.ub), red.ub, 0.0))
        resid = b - A @ xs if m else np.empty(0)
        slack_x = np.clip(resid, sl, su)
        art_rows = np.flatnonzero(np.abs(resid - slack_x) > 0.0)
        k = art_rows.size
        E = np.zeros((m, k))
        art_x = np.empty(k)
        for col, i in enumerate(art_rows):
            gap = resid[i] - slack_x[i]
            E[i, col] = 1.0 if gap > 0 else -1.0
            art_x[col] = abs(gap)

        M = np.hstack([A, np.eye(m), E])
        L = np.concatenate([red.lb, sl, np.zeros(k)])
        U = np.concatenate([red.ub, su, np.full(k, math.inf)])
        x = np.concatenate([xs, slack_x, art_x])
        basis = np.arange(n, n + m)
        basis[art_rows] = n + m + np.arange(k)
        c = np.zeros(n + m + k)
        c[n + m:] = -1.0
        return cls(M, b, L, U, c, basis, x, n), k

    def copy(self) -> "Tableau":
        new = object.__new__(Tableau)
        new.M, new.b, new.c, new.n_struct = self.M, self.b, self.c, self.n_struct
        new.L, new.U = self.L.copy(), self.U.copy()
        new.basis, new.x = self.basis.copy(), self.x.copy()
        new.is_basic = self.is_basic.copy()
        new.T, new.d = self.T.copy(), self.d.copy()
        new.iterations = 0
        new._since_refactor = self._since_refactor
        return new

    def snapshot(self) -> tuple:
        return (self.basis.copy(), self.x.copy(), self.L.copy(), self.U.copy())

    @classmethod
    def restore(cls, like: "Tableau", snap: tuple) -> "Tableau":
        basis, x, L, U = snap
        return cls(like.M, like.b, L.copy(), U.copy(), like.c, basis.copy(), x.copy(),
                   like.n_struct)

    # -- bookkeeping -------------------------------------------------------

    def refactor(self) -> None:
        B = self.M[:, self.basis]
        nb = ~self.is_basic
        rhs = self.b - self.M[:, nb] @ self.x[nb]
        m = B.shape[0]
        if m:
            sol = np.linalg.solve(B, np.column_stack([self.M, rhs]))
            self.T = np.ascontiguousarray(sol[:, :-1])
            self.x[self.basis] = sol[:, -1]
        else:
            self.T = np.zeros((0, self.M.shape[1]))
        self.d = self.c - self.c[self.basis] @ self.T
        self.d[self.basis] = 0.0
        self._since_refactor = 0

    def set_objective(self, c: np.ndarray) -> None:
        self.c = c
        self.d = c - c[self.basis] @ self.T
        self.d[self.basis] = 0.0

    @property
    def objective(self) -> float:
        return float(self.c @ self.x)

    def set_var_bounds(self, j: int, lo: float, hi: float) -> None:
        self.L[j], self.U[j] = lo, hi
        if not self.is_basic[j]:
            old = self.x[j]
            new = min(max(old, lo), hi)
            if new != old:
                self.x[self.basis] -= self.T[:, j] * (new - old)
                self.x[j] = new

    def _suspect(self, pivot: float, vec: np.ndarray) -> bool:
        """Refactor when a small pivot may be rounding drift; True means retry."""
        if self._since_refactor == 0:
            return False
        if abs(pivot) >= SUSPECT_REL * max(1.0, float(np.abs(vec).max())):
            return False
        self.refactor()
        return True

    def _pivot(self, r: int, q: int) -> None:
        T = self.T
        prow = T[r] / T[r, q]
        col = T[:, q].copy()
        col[r] = 0.0
        T -= np.outer(col, prow)
        T[r] = prow
        self.d -= self.d[q] * prow
        self.d[q] = 0.0
        leaving = self.basis[r]
        self.is_basic[leaving] = False
        self.is_basic[q] = True
        self.basis[r] = q
        self.iterations += 1
        self._since_refactor += 1

    # -- primal simplex ----------------------------------------------------

    def primal(self, max_iter: int = MAX_ITER) -> Status | None:
        """Phase-2 iterations from a primal feasible basis.

        Returns OPTIMAL, UNBOUNDED, or None on the iteration limit.
        """
        degenerate = 0
        bland = False
        m = self.T.shape[0]
        for _ in range(max_iter):
            if self._since_refactor >= REFACTOR_EVERY:
                self.refactor()
            d, x = self.d, self.x
            nb = ~self.is_basic
            up = nb & (d > DUAL_TOL) & (x < self.U)
            down = nb & (d < -DUAL_TOL) & (x > self.L)
            elig = up | down
            if not elig.any():
                return Status.OPTIMAL
            if bland:
                q = int(np.flatnonzero(elig)[0])
            else:
                q = int(np.argmax(np.where(elig, np.abs(d), -1.0)))
            direction = 1.0 if up[q] else -1.0

            if m:
                delta = -direction * self.T[:, q]
                xB = x[self.basis]
                ratios = np.full(m, math.inf)
                tol = max(PIVOT_TOL, PIVOT_REL * float(np.abs(delta).max()))
                neg = delta < -tol
                pos = delta > tol
                ratios[neg] = (xB[neg] - self.L[self.basis][neg]) / -delta[neg]
                ratios[pos] = (self.U[self.basis][pos] - xB[pos]) / delta[pos]
                np.maximum(ratios, 0.0, out=ratios)
                theta_row = float(ratios.min())
            else:
                delta = np.empty(0)
                theta_row = math.inf
            flip = self.U[q] - x[q] if direction > 0 else x[q] - self.L[q]

            if flip <= theta_row:
                if not math.isfinite(flip):
                    return Status.UNBOUNDED
                theta = flip
                x[self.basis] += theta * delta
                x[q] = self.U[q] if direction > 0 else self.L[q]
                self.iterations += 1
            else:
                if not math.isfinite(theta_row):
                    return Status.UNBOUNDED
                theta = theta_row
                ties = np.flatnonzero(ratios <= theta + _TIE)
                if bland:
                    r = int(ties[np.argmin(self.basis[ties])])
                else:
                    r = int(ties[np.argmax(np.abs(delta[ties]))])
                if self._suspect(delta[r], delta):
                    continue
                leaving = self.basis[r]
                x[self.basis] += theta * delta
                x[q] += direction * theta
                x[leaving] = self.L[leaving] if delta[r] < 0 else self.U[leaving]
                self._pivot(r, q)

            if theta <= _TIE:
                degenerate += 1
                if degenerate > STALL_LIMIT:
                    bland = True
            else:
                degenerate = 0
                bland = False
        return None

    # -- dual simplex ------------------------------------------------------

    def dual(self, max_iter: int = MAX_ITER) -> Status | None:
        """Dual iterations from a dual feasible basis until primal feasible.

        Returns OPTIMAL, INFEASIBLE, or None on the iteration limit.
        """
        degenerate = 0
        bland = False
        for _ in range(max_iter):
            if self._since_refactor >= REFACTOR_EVERY:
                self.refactor()
            basis = self.basis
            xB = self.x[basis]
            low = self.L[basis] - xB
            high = xB - self.U[basis]
            viol = np.maximum(low, high)
            bad = viol > FEAS_TOL
            if not bad.any():
                return Status.OPTIMAL
            if bland:
                cand = np.flatnonzero(bad)
                r = int(cand[np.argmin(basis[cand])])
            else:
                r = int(np.argmax(viol))
            raise_it = low[r] > high[r]
            target = self.L[basis[r]] if raise_it else self.U[basis[r]]

            row = self.T[r]
            nb = ~self.is_basic
            can_inc = nb & (self.x < self.U)
            can_dec = nb & (self.x > self.L)
            tol = max(PIVOT_TOL, PIVOT_REL * float(np.abs(row[nb]).max(initial=0.0)))
            if raise_it:
                elig = (can_inc & (row < -tol)) | (can_dec & (row > tol))
            else:
                elig = (can_inc & (row > tol)) | (can_dec & (row < -tol))
            if not elig.any():
                return Status.INFEASIBLE
            idx = np.flatnonzero(elig)
            ratios = np.abs(self.d[idx]) / np.abs(row[idx])
            best = ratios.min()
            ties = idx[ratios <= best + _TIE]
            if bland:
                q = int(ties[0])
            else:
                q = int(ties[np.argmax(np.abs(row[ties]))])
            if self._suspect(row[q], self.T[:, q]):
                continue

            step = (xB[r] - target) / row[q]
            self.x[basis] -= self.T[:, q] * step
            self.x[q] += step
            self.x[basis[r]] = target
            self._pivot(r, q)

            if best <= _TIE:
                degenerate += 1
                if degenerate > STALL_LIMIT:
                    bland = True
            else:
                degenerate = 0
                bland = False
        return None

    # -- phases ------------------------------------------------------------

    def drop_artificials(self, n_art: int) -> None:
        """Pivot zero-valued artificials out of the basis and delete their columns."""
        N = self.M.shape[1]
        first_art = N - n_art
        for r in range(self.T.shape[0]):
            if self.basis[r] >= first_art:
                row = np.abs(self.T[r, :first_art])
                row[self.is_basic[:first_art]] = 0.0
                q = int(np.argmax(row)) if row.size else -1
                if q >= 0 and row[q] > 1e-7:
                    self.x[self.basis[r]] = 0.0
                    self._pivot(r, q)
        keep = np.ones(N, dtype=bool)
        keep[first_art:] = self.is_basic[first_art:]
        if not keep.all():
            remap = -np.ones(N, dtype=int)
            remap[keep] = np.arange(int(keep.sum()))
            self.M = self.M[:, keep]
            self.L, self.U = self.L[keep], self.U[keep]
            self.x, self.c = self.x[keep], self.c[keep]
            self.is_basic = self.is_basic[keep]
            self.basis = remap[self.basis]
            self.T, self.d = self.T[:, keep], self.d[keep]
        # basic artificials left over sit on redundant rows; pin them at zero
        self.U[self.n_struct + self.T.shape[0]:] = 0.0

    def reoptimize(self) -> Status | None:
        """Restore optimality after bound changes (dual, then primal clean-up).

        Returns None when either pass hits its iteration limit.
        """
        status = self.dual()
        if status is None or status is Status.INFEASIBLE:
            return status
        return self.primal()


def phase_one(red: Reduced, c: np.ndarray) -> tuple[Tableau | None, Status]:
    """Build a feasible tableau for ``red`` carrying objective ``c`` on structurals."""
    tab, n_art = Tableau.initial(red)
    if n_art:
        status = tab.primal()
        if status is None:
            raise RuntimeError("simplex iteration limit reached in phase one")
        tab.refactor()
        art = tab.x[tab.M.shape[1] - n_art:]
        if art.size and art.max() > FEAS_TOL * max(1.0, float(np.max(np.abs(red.b), initial=0.0))):
            return None, Status.INFEASIBLE
        tab.drop_artificials(n_art)
    full_c = np.zeros(tab.M.shape[1])
    full_c[: red.A.shape[1]] = c
    tab.set_objective(full_c)
    return tab, Status.OPTIMAL


def solve_reduced(red: Reduced) -> tuple[Tableau | None, Status]:
    tab, status = phase_one(red, red.c)
    if tab is None:
        return None, status
    status = tab.primal()
    if status is None:
        raise RuntimeError("simplex iteration limit reached")
    if status is Status.OPTIMAL:
        tab.refactor()
    return tab, status


def solve_lp(model: LpModel) -> LpSolution:
    """Solve the LP relaxation of ``model`` (binary restrictions are ignored)."""
    model.validate()
    red = presolve(model)
    if red.infeasible:
        return LpSolution(Status.INFEASIBLE)
    tab, status = solve_reduced(red)
    if status is not Status.OPTIMAL:
        return LpSolution(status, iterations=tab.iterations if tab else 0)
    x = red.expand(tab.x[: red.A.shape[1]])
    obj = float(np.dot(model.obj, x))
    return LpSolution(Status.OPTIMAL, obj, x, tab.iterations)


__all__ = ["solve_lp", "presolve", "Tableau", "Reduced", "OBJ_TOL"]
