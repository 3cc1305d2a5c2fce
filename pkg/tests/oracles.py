"""Reference answers computed without the package's own solver.

* ``vertex_lp`` enumerates basic solutions of a bounded LP directly.
* ``enumerate_mip`` fixes every binary pattern and hands the remaining LP to
  SciPy's HiGHS, so it shares no code with the branch-and-bound.
* ``toy_lattice`` brute-forces the two-step V2G toy on a 1 kW grid.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import linprog

from fleetv2g.lpmip import LpModel, Relation


def _as_dense(model: LpModel):
    A, b, rel = model.dense()
    return A, b, rel, np.asarray(model.lb), np.asarray(model.ub), np.asarray(model.obj)


def vertex_lp(model: LpModel, tol: float = 1e-9) -> tuple[str, float]:
    """Best objective over all vertices of a bounded LP; ("infeasible", nan) if none.

    Every vertex is the solution of n linearly independent active constraints
    drawn from the rows and the (finite) variable bounds.
    """
    A, b, rel, lb, ub, c = _as_dense(model)
    n = A.shape[1]
    if not (np.isfinite(lb).all() and np.isfinite(ub).all()):
        raise ValueError("vertex oracle needs finite bounds")
    planes = [(A[i], b[i]) for i in range(A.shape[0])]
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        planes += [(e, lb[j]), (e, ub[j])]
    G = np.array([p[0] for p in planes])
    h = np.array([p[1] for p in planes])
    best = -math.inf
    combos = np.array(list(itertools.combinations(range(len(planes)), n)))
    if combos.size == 0:
        return "infeasible", math.nan
    M = G[combos]
    rhs = h[combos]
    det = np.linalg.det(M)
    ok = np.abs(det) > 1e-10
    X = np.linalg.solve(M[ok], rhs[ok][..., None])[..., 0]
    for x in X:
        if np.any(x < lb - tol) or np.any(x > ub + tol):
            continue
        lhs = A @ x
        good = True
        for i, r in enumerate(rel):
            if r is Relation.LE and lhs[i] > b[i] + tol * max(1, abs(b[i])):
                good = False
            elif r is Relation.GE and lhs[i] < b[i] - tol * max(1, abs(b[i])):
                good = False
            elif r is Relation.EQ and abs(lhs[i] - b[i]) > tol * max(1, abs(b[i])):
                good = False
            if not good:
                break
        if good:
            best = max(best, float(c @ x))
    if best == -math.inf:
        return "infeasible", math.nan
    return "optimal", best


def highs_lp(A, b, rel, lb, ub, c) -> tuple[str, float, np.ndarray | None]:
    """Maximise ``c.x`` with SciPy's HiGHS."""
    le = [i for i, r in enumerate(rel) if r is Relation.LE]
    ge = [i for i, r in enumerate(rel) if r is Relation.GE]
    eq = [i for i, r in enumerate(rel) if r is Relation.EQ]
    A_ub = np.vstack([A[le], -A[ge]]) if le or ge else None
    b_ub = np.concatenate([b[le], -b[ge]]) if le or ge else None
    res = linprog(-c, A_ub=A_ub, b_ub=b_ub,
                  A_eq=A[eq] if eq else None, b_eq=b[eq] if eq else None,
                  bounds=list(zip(lb, [None if math.isinf(u) else u for u in ub])),
                  method="highs")
    if res.status == 0:
        return "optimal", -res.fun, res.x
    if res.status == 2:
        return "infeasible", math.nan, None
    if res.status == 3:
        return "unbounded", math.nan, None
    raise RuntimeError(res.message)


def enumerate_mip(model: LpModel) -> tuple[str, float]:
    """Exhaustive search over binary patterns, HiGHS LP for the rest."""
    A, b, rel, lb, ub, c = _as_dense(model)
    bins = sorted(model.binary_indices)
    best = -math.inf
    unbounded = False
    for pattern in itertools.product((0.0, 1.0), repeat=len(bins)):
        lo, hi = lb.copy(), ub.copy()
        skip = False
        for j, v in zip(bins, pattern):
            if v < lo[j] or v > hi[j]:
                skip = True
                break
            lo[j] = hi[j] = v
        if skip:
            continue
        status, obj, _ = highs_lp(A, b, rel, lo, hi, c)
        if status == "unbounded":
            unbounded = True
        elif status == "optimal":
            best = max(best, obj)
    if unbounded:
        return "unbounded", math.nan
    if best == -math.inf:
        return "infeasible", math.nan
    return "optimal", best


def toy_lattice(p_max=10, e_start=10.0, e_min=0.0, e_max=20.0, e_end_min=0.0, t_s=1.0,
                fr=(1.0, 1.0), buy=(0.0, 0.0)) -> tuple[float, tuple]:
    """Brute force over integer kW choices for the lossless two-step toy.

    Per step the vehicle picks (c, d, bc, bd) with c*d = 0, bc <= c,
    bd + d <= P, (d - c) + bc + bd <= P. Energy follows E_t = E_{t-1} + c - d
    and the sustain rule min(E_t, E_{t-1}) + c - (d + bd) * t_s >= e_min.
    """
    rng = range(p_max + 1)
    per_step = [(c, d, bc, bd) for c in rng for d in rng for bc in rng for bd in rng
                if c * d == 0 and bc <= c and bd + d <= p_max and (d - c) + bc + bd <= p_max]
    S = np.array(per_step, dtype=float)
    e1 = e_start + S[:, 0] - S[:, 1]
    ok1 = (e1 >= e_min) & (e1 <= e_max)
    ok1 &= np.minimum(e1, e_start) + S[:, 0] - (S[:, 1] + S[:, 3]) * t_s >= e_min
    rev1 = (S[:, 2] + S[:, 3]) * fr[0] - S[:, 0] * buy[0]
    rev2 = (S[:, 2] + S[:, 3]) * fr[1] - S[:, 0] * buy[1]
    best, arg = -math.inf, None
    for i in np.flatnonzero(ok1):
        e2 = e1[i] + S[:, 0] - S[:, 1]
        ok2 = (e2 >= e_min) & (e2 <= e_max) & (e2 >= e_end_min)
        ok2 &= np.minimum(e2, e1[i]) + S[:, 0] - (S[:, 1] + S[:, 3]) * t_s >= e_min
        if not ok2.any():
            continue
        cand = np.where(ok2, rev1[i] + rev2, -math.inf)
        k = int(np.argmax(cand))
        if cand[k] > best:
            best, arg = float(cand[k]), (per_step[i], per_step[k])
    return best, arg
