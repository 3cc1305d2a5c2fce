"""Choose the departure step that maximises one vehicle's daily revenue."""

from __future__ import annotations

import logging
from concurrent.futures import Executor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .charging import (
    DEFAULT_KAPPA, PENALTY_UNIT, InfeasibleDayError, lift_start_energy, schedule_day,
)
from .core import (
    EvParams, PriceSeries, ScenarioKind, Schedule, TimeGrid, TripSpec, ValidationError,
    derive_grid_mask, validate,
)
from .lpmip import DEFAULT_GAP

log = logging.getLogger(__name__)

CANDIDATE_CSV_HEADER = ("start_step", "feasible", "revenue_gbp")
TIE_TOL = 1e-9  # relative; closer revenues count as a tie


class NoFeasibleStartError(RuntimeError):
    def __init__(self, message: str, diagnostics: list[tuple[int, str]]):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class Candidate:
    start_step: int
    feasible: bool
    revenue: float
    message: str = ""


@dataclass(frozen=True)
class TripResult:
    best_start: int
    schedule: Schedule
    revenue: float
    candidates: tuple[Candidate, ...]

    def candidate_rows(self) -> list[tuple]:
        return [(c.start_step, int(c.feasible), c.revenue) for c in self.candidates]


def feasible_start_times(trip: TripSpec, grid: TimeGrid | None = None) -> list[int]:
    """Every step ``s`` with ``window_start <= s`` and ``s + duration <= window_end``."""
    end = trip.window_end_step
    if grid is not None:
        end = min(end, grid.step_count)
    return list(range(trip.window_start_step, end - trip.duration_steps + 1))


def solve_start(
    ev: EvParams,
    trip: TripSpec,
    prices: PriceSeries,
    scenario: ScenarioKind,
    grid: TimeGrid,
    start: int,
    *,
    penalty_mode: str = PENALTY_UNIT,
    kappa: float = DEFAULT_KAPPA,
    gap: float = DEFAULT_GAP,
) -> Schedule:
    """Schedule the day for one fixed departure step."""
    day_ev = lift_start_energy(ev, start, grid)
    mask = derive_grid_mask(grid, trip, start)
    return schedule_day(day_ev, mask, prices, scenario, start, grid,
                        travel_energy=trip.travel_energy, penalty_mode=penalty_mode,
                        kappa=kappa, gap=gap)


def solve_candidate(job: tuple) -> tuple[int, Schedule | None, str]:
    """Worker entry point: one ``(ev, trip, prices, scenario, grid, start, options)`` job."""
    ev, trip, prices, scenario, grid, start, kw = job
    try:
        return start, solve_start(ev, trip, prices, scenario, grid, start, **kw), ""
    except InfeasibleDayError as exc:
        return start, None, str(exc)


def candidate_jobs(
    ev: EvParams,
    trip: TripSpec,
    prices: PriceSeries,
    scenario: ScenarioKind,
    grid: TimeGrid,
    **options,
) -> list[tuple]:
    problems = validate(ev, trip, prices, grid)
    if problems:
        raise ValidationError("; ".join(problems))
    scenario = ScenarioKind.parse(scenario)
    return [(ev, trip, prices, scenario, grid, s, options)
            for s in feasible_start_times(trip, grid)]


def reduce_candidates(results: Sequence[tuple[int, Schedule | None, str]]) -> TripResult:
    """Pick the best start; ties keep the earliest, infeasible starts are skipped."""
    best: tuple[int, Schedule] | None = None
    cands = []
    bad = []
    for start, sched, msg in sorted(results, key=lambda r: r[0]):
        if sched is None:
            log.warning("start step %d skipped: %s", start, msg)
            cands.append(Candidate(start, False, float("nan"), msg))
            bad.append((start, msg))
            continue
        cands.append(Candidate(start, True, sched.revenue_net))
        if best is None or sched.revenue_net > best[1].revenue_net + TIE_TOL * max(
                1.0, abs(best[1].revenue_net)):
            best = (start, sched)
    if best is None:
        raise NoFeasibleStartError("no feasible departure step: "
                                   + "; ".join(f"step {s}: {m}" for s, m in bad), bad)
    return TripResult(best[0], best[1], best[1].revenue_net, tuple(cands))


def optimize_trip(
    ev: EvParams,
    trip: TripSpec,
    prices: PriceSeries,
    scenario: ScenarioKind,
    grid: TimeGrid,
    *,
    penalty_mode: str = PENALTY_UNIT,
    kappa: float = DEFAULT_KAPPA,
    gap: float = DEFAULT_GAP,
    executor: Executor | None = None,
) -> TripResult:
    """Solve every admissible departure and keep the best by net revenue.

    Ties go to the earliest start. Candidate solves may be farmed out to
    ``executor``; results are always reduced in start order.
    """
    jobs = candidate_jobs(ev, trip, prices, scenario, grid,
                          penalty_mode=penalty_mode, kappa=kappa, gap=gap)
    run = executor.map if executor is not None else map
    return reduce_candidates(list(run(solve_candidate, jobs)))


def revenue_curve(result: TripResult) -> np.ndarray:
    return np.array([c.revenue for c in result.candidates])
