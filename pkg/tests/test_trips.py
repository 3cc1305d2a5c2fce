import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import Bounds, LinearConstraint, milp

from fleetv2g.charging import build_day_model, lift_start_energy
from fleetv2g.core import (
    EvParams, PriceSeries, ScenarioKind, TimeGrid, TripSpec, ValidationError, derive_grid_mask,
)
from fleetv2g.lpmip import Relation
from fleetv2g.runner import csv_text
from fleetv2g.trips import (
    CANDIDATE_CSV_HEADER, NoFeasibleStartError, feasible_start_times, optimize_trip,
    revenue_curve, solve_start,
)

GRID = TimeGrid()
FR = ScenarioKind.FUTURE_FR
FLAT = PriceSeries.constant(24, buy=0.1, fr=0.02)
MORNING = PriceSeries(np.full(24, 0.1), np.zeros(24),
                      np.where(np.arange(24) < 6, 0.08, 0.005))


def highs_objective(model) -> float | None:
    A, b, rel = model.dense()
    lo = np.where([r is Relation.LE for r in rel], -np.inf, b)
    hi = np.where([r is Relation.GE for r in rel], np.inf, b)
    integrality = np.zeros(model.n)
    integrality[list(model.binary_indices)] = 1
    res = milp(-np.array(model.obj), constraints=LinearConstraint(A, lo, hi),
               integrality=integrality, bounds=Bounds(model.lb, model.ub),
               options={"mip_rel_gap": 0.0})
    return -res.fun if res.status == 0 else None


def test_candidate_counts():
    ws, we = GRID.window_steps(15)
    assert len(feasible_start_times(TripSpec(5, 6.0, ws, we, 0), GRID)) == 10
    ws, we = GRID.window_steps(22)
    assert len(feasible_start_times(TripSpec(8, 6.0, ws, we, 0), GRID)) == 14
    assert feasible_start_times(TripSpec(5, 6.0, 3, 8, 3), GRID) == [3]
    assert feasible_start_times(TripSpec(5, 6.0, 2, 22, 2)) == list(range(2, 18))


def test_constant_prices_tie_to_earliest_start():
    ev = EvParams(e_start=38.0, e_req=38.0)
    res = optimize_trip(ev, TripSpec(5, 6.0, 0, 15, 3), FLAT, FR, GRID, gap=0.0)
    curve = revenue_curve(res)
    assert np.ptp(curve) <= 1e-9 * abs(curve[0])
    assert res.best_start == 0
    assert res.revenue == pytest.approx(3.266667, abs=1e-6)


def test_high_morning_fr_pushes_departure_after_the_block():
    trip = TripSpec(6, 6.0, 0, 22, 0)
    res = optimize_trip(EvParams(), trip, MORNING, FR, GRID, gap=0.0)
    assert res.best_start == 6
    # independent check: HiGHS on every candidate day, earliest best wins
    ref = []
    for s in feasible_start_times(trip, GRID):
        h = build_day_model(lift_start_energy(EvParams(), s, GRID),
                            derive_grid_mask(GRID, trip, s), MORNING, FR, s, GRID,
                            travel_energy=trip.travel_energy)
        obj = highs_objective(h.model)
        ref.append(-np.inf if obj is None else obj)
    ref = np.array(ref)
    best = int(np.flatnonzero(ref >= ref.max() - 1e-7)[0])
    assert best == res.best_start
    assert res.schedule.revenue_net - res.schedule.penalty == pytest.approx(ref.max(), abs=1e-6)


def test_optimum_dominates_every_candidate_and_the_original():
    trip = TripSpec(5, 8.0, 0, 15, 7)
    res = optimize_trip(EvParams(), trip, MORNING, FR, GRID)
    feasible = [c.revenue for c in res.candidates if c.feasible]
    assert res.revenue == pytest.approx(max(feasible), rel=1e-9)
    orig = solve_start(EvParams(), trip, MORNING, FR, GRID, trip.original_start_step)
    assert res.revenue >= orig.revenue_net - 1e-9 * max(1.0, abs(orig.revenue_net))


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 1000), extra=st.integers(1, 6))
def test_wider_window_never_loses(seed, extra):
    rng = np.random.default_rng(seed)
    prices = PriceSeries(rng.uniform(0.05, 0.2, 24), np.zeros(24), rng.uniform(0, 0.06, 24))
    narrow = TripSpec(4, 6.0, 4, 12, 4)
    wide = TripSpec(4, 6.0, 4, 12 + extra, 4)
    a = optimize_trip(EvParams(), narrow, prices, ScenarioKind.SMART, GRID, gap=0.0)
    b = optimize_trip(EvParams(), wide, prices, ScenarioKind.SMART, GRID, gap=0.0)
    assert b.revenue >= a.revenue - 1e-9 * max(1.0, abs(a.revenue))


def test_infeasible_late_starts_are_skipped(caplog):
    with caplog.at_level(logging.WARNING, logger="fleetv2g.trips"):
        res = optimize_trip(EvParams(), TripSpec(5, 30.0, 0, 24, 0), FLAT,
                            ScenarioKind.SMART, GRID, gap=0.0)
    bad = [c.start_step for c in res.candidates if not c.feasible]
    assert bad == [18, 19]
    assert all("terminal level" in c.message for c in res.candidates if not c.feasible)
    assert sum("skipped" in r.message for r in caplog.records) == 2
    assert res.best_start not in bad


def test_all_starts_infeasible_raises():
    ev = EvParams(p_max=2.0, e_end_min=38.0)
    with pytest.raises(NoFeasibleStartError) as exc:
        optimize_trip(ev, TripSpec(5, 30.0, 5, 24, 5), FLAT, ScenarioKind.SMART, GRID)
    assert [s for s, _ in exc.value.diagnostics] == list(range(5, 20))


def test_invalid_trip_is_rejected_before_solving():
    with pytest.raises(ValidationError):
        optimize_trip(EvParams(), TripSpec(5, 36.0, 0, 15, 0), FLAT, FR, GRID)


def test_executor_matches_serial():
    trip = TripSpec(5, 6.0, 0, 15, 3)
    serial = optimize_trip(EvParams(), trip, MORNING, FR, GRID)
    with ThreadPoolExecutor(4) as pool:
        pooled = optimize_trip(EvParams(), trip, MORNING, FR, GRID, executor=pool)
    assert pooled.best_start == serial.best_start
    assert pooled.candidate_rows() == serial.candidate_rows()
    assert pooled.schedule.energy.tobytes() == serial.schedule.energy.tobytes()


def test_candidate_csv_layout():
    res = optimize_trip(EvParams(), TripSpec(5, 6.0, 0, 8, 1), FLAT, FR, GRID)
    text = csv_text(CANDIDATE_CSV_HEADER, res.candidate_rows())
    lines = text.splitlines()
    assert lines[0] == "start_step,feasible,revenue_gbp"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["0", "1", "2", "3"]
