"""Best-bound branch-and-bound over binary variables."""

from __future__ import annotations

import heapq
import logging
import math

import numpy as np

from .model import (
    INT_TOL, OBJ_TOL, LpModel, MipSolution, ModelError, NodeLimitError, Status,
)
from .simplex import Reduced, Tableau, phase_one, presolve

log = logging.getLogger(__name__)

DEFAULT_GAP = 1e-3
BINARY_LIMIT = 64
NODE_LIMIT = 20_000


def _first_fractional(x: np.ndarray, binaries: list[int]) -> int:
    for j in binaries:
        if abs(x[j] - round(x[j])) > INT_TOL:
            return j
    return -1


def _cold(red: Reduced, L: np.ndarray, U: np.ndarray) -> tuple[Tableau | None, Status]:
    """Re-solve from scratch with the structural bounds of a node."""
    n = red.A.shape[1]
    sub = Reduced(red.A, red.b, red.rel, L[:n].copy(), U[:n].copy(), red.c, red.keep,
                  red.full_x, red.offset, red.binaries)
    tab, status = phase_one(sub, sub.c)
    if tab is None:
        return None, status
    status = tab.primal()
    if status is None:
        raise RuntimeError("simplex iteration limit reached")
    if status is Status.OPTIMAL:
        tab.refactor()
    return tab, status


def _branch(parent: Tableau, red: Reduced, j: int, value: float) -> tuple[Tableau | None, Status]:
    child = parent.copy()
    child.set_var_bounds(j, value, value)
    status = child.reoptimize()
    if status is None:
        log.debug("warm start stalled on x%d=%g; cold re-solve", j, value)
        return _cold(red, child.L, child.U)
    if status is Status.OPTIMAL:
        child.refactor()
    return child, status


def solve_mip(
    model: LpModel,
    gap: float = DEFAULT_GAP,
    *,
    node_limit: int = NODE_LIMIT,
    binary_limit: int = BINARY_LIMIT,
) -> MipSolution:
    """Maximise ``model`` with its binary restrictions to a relative ``gap``.

    Nodes are explored best bound first, deeper nodes first on ties, and each
    node branches on its lowest-index fractional binary with the down branch
    evaluated first. Children are warm-started from the parent basis with the
    dual simplex.
    """
    model.validate()
    if len(model.binary_indices) > binary_limit:
        raise ModelError(
            f"{len(model.binary_indices)} binaries exceeds the limit of {binary_limit}")
    if gap < 0:
        raise ModelError("gap must be non-negative")

    red = presolve(model)
    if red.infeasible:
        return MipSolution(Status.INFEASIBLE, node_count=0)
    root, status = phase_one(red, red.c)
    if root is None:
        return MipSolution(Status.INFEASIBLE, node_count=1)
    status = root.primal()
    if status is None:
        raise RuntimeError("simplex iteration limit reached")
    if status is Status.UNBOUNDED:
        return MipSolution(Status.UNBOUNDED, node_count=1)
    root.refactor()

    bins = red.binaries
    nodes = 1
    best_x: np.ndarray | None = None
    best_obj = -math.inf

    def value(tab: Tableau) -> float:
        return tab.objective + red.offset

    def accept(tab: Tableau) -> None:
        nonlocal best_x, best_obj
        obj = value(tab)
        if obj > best_obj + OBJ_TOL or best_x is None:
            best_obj, best_x = obj, tab.x[: red.A.shape[1]].copy()

    def closed(bound: float) -> bool:
        return best_x is not None and bound <= best_obj + gap * abs(best_obj) + OBJ_TOL

    j = _first_fractional(root.x, bins)
    heap: list = []
    if j < 0:
        accept(root)
    else:
        # incumbent from the rounded relaxation
        trial = root.copy()
        for k in bins:
            v = float(round(trial.x[k]))
            trial.set_var_bounds(k, v, v)
        st = trial.reoptimize()
        nodes += 1
        if st is Status.OPTIMAL:
            trial.refactor()
            accept(trial)
        heap.append((-value(root), 0, 0, root.snapshot()))
    seq = 1

    while heap:
        bound = -heap[0][0]
        if closed(bound):
            break
        _, negdepth, _, snap = heapq.heappop(heap)
        node = Tableau.restore(root, snap)
        j = _first_fractional(node.x, bins)
        for fix in (0.0, 1.0):
            child, st = _branch(node, red, j, fix)
            nodes += 1
            if st is not Status.OPTIMAL:
                continue
            obj = value(child)
            if closed(obj):
                continue
            if _first_fractional(child.x, bins) < 0:
                accept(child)
            else:
                heapq.heappush(heap, (-obj, negdepth - 1, seq, child.snapshot()))
                seq += 1
        if nodes > node_limit:
            inc = None
            if best_x is not None:
                inc = _finish(model, red, best_x, bins, heap, nodes)
            raise NodeLimitError(f"node limit {node_limit} reached", inc)

    if best_x is None:
        return MipSolution(Status.INFEASIBLE, node_count=nodes)
    return _finish(model, red, best_x, bins, heap, nodes)


def _finish(model, red, x_red, bins, heap, nodes) -> MipSolution:
    x_red = x_red.copy()
    x_red[bins] = np.round(x_red[bins])
    x = red.expand(x_red)
    obj = float(np.dot(model.obj, x))
    bound = max([obj] + [-h[0] for h in heap])
    diff = bound - obj
    achieved = 0.0 if diff <= OBJ_TOL else diff / max(abs(obj), 1e-12)
    return MipSolution(Status.OPTIMAL, obj, x, achieved, nodes, bound)
