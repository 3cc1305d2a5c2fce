"""Per-EV day model: build the mixed-binary program, solve it, decode it.

Variable roles per step ``t``:

``c``, ``d``        charge / discharge power (kW)
``bsup_c``          upward availability from curtailing charge (kW)
``bsup_d``          upward availability from extra discharge (kW)
``e``               battery level at the end of step ``t`` (kWh)
``y``               1 when the step may charge, 0 when it may discharge
``x1``              lower envelope ``min(E_t, E_{t-1})`` used by the
                    sustain-duration row

``y`` and ``x1`` only exist at connected steps. Disconnected steps keep the
four power roles, fixed at zero, so each step has the same layout.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import EvParams, PriceSeries, ScenarioKind, Schedule, TimeGrid, ValidationError
from .lpmip import DEFAULT_GAP, LpModel, MipSolution, Relation, Status, solve_lp, solve_mip

log = logging.getLogger(__name__)

ROLES = ("c", "d", "bsup_c", "bsup_d", "e", "y", "x1")
POWER_ROLES = ("c", "d", "bsup_c", "bsup_d")

PENALTY_UNIT = "unit"
PENALTY_SELL = "sell"
DEFAULT_KAPPA = 0.01  # GBP/kWh charged per discharged kWh, scaled by delta
SNAP = 1e-9


class InfeasibleDayError(RuntimeError):
    """No schedule meets the departure and terminal requirements."""

    def __init__(self, message: str, departure_step: int | None, shortfall_kwh: float):
        super().__init__(message)
        self.departure_step = departure_step
        self.shortfall_kwh = shortfall_kwh


@dataclass
class DayModelHandle:
    model: LpModel
    index: dict[tuple[int, str], int]
    scenario: ScenarioKind
    ev: EvParams
    mask: np.ndarray
    prices: PriceSeries
    grid: TimeGrid
    start_step: int | None
    return_step: int | None
    travel_energy: float
    penalty_mode: str = PENALTY_UNIT
    kappa: float = DEFAULT_KAPPA
    rows: dict[str, int] = field(default_factory=dict)

    def var(self, step: int, role: str) -> int | None:
        return self.index.get((step, role))


def trip_bounds(mask: np.ndarray) -> tuple[int | None, int | None]:
    """(first away step, first step back) or (None, None) when always plugged."""
    away = np.flatnonzero(~np.asarray(mask, dtype=bool))
    if away.size == 0:
        return None, None
    s, last = int(away[0]), int(away[-1])
    if last - s + 1 != away.size:
        raise ValidationError("mask must contain a single contiguous trip", "mask")
    return s, last + 1


def lift_start_energy(ev: EvParams, start_step: int | None, grid: TimeGrid) -> EvParams:
    """Raise the opening level so the departure requirement is reachable.

    A day normally opens at ``e_start``. When the trip leaves so early that
    full-power charging from ``e_start`` cannot reach ``e_req``, the day opens
    at the lowest level that can. The terminal floor is raised alongside so
    the day ends no lower than it began.
    """
    if start_step is None:
        return ev
    reach = ev.e_req - start_step * ev.p_max * ev.eta_c * grid.step_hours
    e0 = min(max(ev.e_start, reach), ev.e_max)
    if e0 == ev.e_start:
        return ev
    return replace(ev, e_start=e0, e_end_min=max(ev.e_end_min, e0))


def build_day_model(
    ev: EvParams,
    mask: np.ndarray,
    prices: PriceSeries,
    scenario: ScenarioKind,
    start_step: int | None,
    grid: TimeGrid,
    *,
    travel_energy: float = 0.0,
    penalty_mode: str = PENALTY_UNIT,
    kappa: float = DEFAULT_KAPPA,
) -> DayModelHandle:
    mask = np.asarray(mask, dtype=bool)
    T, dt = grid.step_count, grid.step_hours
    if mask.shape != (T,):
        raise ValidationError(f"mask has length {mask.size}, expected {T}", "mask")
    if len(prices) != T:
        raise ValidationError(f"prices have length {len(prices)}, expected {T}", "prices")
    if penalty_mode not in (PENALTY_UNIT, PENALTY_SELL):
        raise ValidationError(f"unknown penalty mode {penalty_mode!r}", "penalty_mode")
    s, r = trip_bounds(mask)
    if s != start_step:
        raise ValidationError(f"mask trip starts at {s}, start_step is {start_step}", "start_step")

    scenario = ScenarioKind.parse(scenario)
    v2g, fr_on = scenario.v2g_enabled, scenario.fr_enabled
    P, ec, ed = ev.p_max, ev.eta_c, ev.eta_d
    delta = ev.delta_penalty

    m = LpModel()
    idx: dict[tuple[int, str], int] = {}
    rows: dict[str, int] = {}
    # E_tr is taken off at the return step; a trip that runs past the horizon
    # settles it on the last step instead.
    etr_step = None if r is None else min(r, T - 1)

    for t in range(T):
        on = bool(mask[t])
        p_hi = P if on else 0.0
        fr = float(prices.fr[t]) * dt
        buy = float(prices.buy[t]) * dt
        sell = float(prices.sell[t]) * dt
        if penalty_mode == PENALTY_UNIT:
            d_obj = sell - delta * kappa * dt
        else:
            d_obj = -sell * delta
        idx[t, "c"] = m.add_var(0.0, p_hi, -buy, f"c[{t}]")
        idx[t, "d"] = m.add_var(0.0, p_hi if v2g else 0.0, d_obj, f"d[{t}]")
        idx[t, "bsup_c"] = m.add_var(0.0, p_hi if fr_on else 0.0, fr, f"bsup_c[{t}]")
        idx[t, "bsup_d"] = m.add_var(0.0, p_hi if fr_on else 0.0, fr, f"bsup_d[{t}]")
        idx[t, "e"] = m.add_var(ev.e_min, ev.e_max, 0.0, f"e[{t}]")
        if on:
            if v2g:
                idx[t, "y"] = m.add_var(name=f"y[{t}]", binary=True)
            else:
                idx[t, "y"] = m.add_var(1.0, 1.0, 0.0, f"y[{t}]")
            idx[t, "x1"] = m.add_var(ev.e_min, ev.e_max, 0.0, f"x1[{t}]")

    for t in range(T):
        c, d, bc, bd, e = (idx[t, k] for k in ("c", "d", "bsup_c", "bsup_d", "e"))
        etr = travel_energy if t == etr_step else 0.0
        bal = {e: 1.0, c: -ec * dt, d: dt / ed}
        rhs = -etr
        if t == 0:
            rhs += ev.e_start
        else:
            bal[idx[t - 1, "e"]] = -1.0
        rows[f"balance[{t}]"] = m.add_row(bal, Relation.EQ, rhs, f"balance[{t}]")
        if not mask[t]:
            continue
        y, x1 = idx[t, "y"], idx[t, "x1"]
        m.add_row({c: 1.0, y: -P}, Relation.LE, 0.0, f"chg_on[{t}]")
        m.add_row({d: 1.0, y: P}, Relation.LE, P, f"dis_on[{t}]")
        m.add_row({bd: 1.0, d: 1.0}, Relation.LE, P, f"bsd_cap[{t}]")
        m.add_row({bc: 1.0, c: -1.0}, Relation.LE, 0.0, f"bsc_cap[{t}]")
        m.add_row({d: 1.0, c: -1.0, bc: 1.0, bd: 1.0}, Relation.LE, P, f"net_cap[{t}]")
        ts = ev.t_sustain / ed
        m.add_row({x1: 1.0, c: ec * dt, d: -ts, bd: -ts}, Relation.GE, ev.e_min, f"sustain[{t}]")
        m.add_row({x1: 1.0, e: -1.0}, Relation.LE, 0.0, f"env_now[{t}]")
        if t == 0:
            m.add_row({x1: 1.0}, Relation.LE, ev.e_start, f"env_prev[{t}]")
        else:
            m.add_row({x1: 1.0, idx[t - 1, "e"]: -1.0}, Relation.LE, 0.0, f"env_prev[{t}]")

    if s is not None:
        if s == 0:
            # the level entering step 0 is the constant e_start
            rows["departure"] = m.add_row({}, Relation.EQ, ev.e_req - ev.e_start, "departure")
        else:
            rows["departure"] = m.add_row({idx[s - 1, "e"]: 1.0}, Relation.EQ, ev.e_req,
                                          "departure")
    rows["terminal"] = m.add_row({idx[T - 1, "e"]: 1.0}, Relation.GE, ev.e_end_min, "terminal")

    return DayModelHandle(m, idx, scenario, ev, mask, prices, grid, s, r, float(travel_energy),
                          penalty_mode, kappa, rows)


def _money(prices: PriceSeries, dt: float, delta: float, penalty_mode: str, kappa: float,
           c, d, bc, bd) -> tuple[float, float, float, float]:
    revenue_fr = float(np.dot(prices.fr, bc + bd) * dt)
    cost = float(np.dot(prices.buy, c) * dt)
    if penalty_mode == PENALTY_UNIT:
        sell = float(np.dot(prices.sell, d) * dt)
        penalty = float(delta * kappa * np.sum(d) * dt)
    else:
        sell = 0.0
        penalty = float(delta * np.dot(prices.sell, d) * dt)
    return revenue_fr, cost, sell, penalty


def decode_solution(handle: DayModelHandle, solution: MipSolution) -> Schedule:
    if solution.status is not Status.OPTIMAL:
        raise ValueError(f"cannot decode a {solution.status.value} solution")
    x = np.asarray(solution.x, dtype=float)
    T = handle.grid.step_count

    def pick(role: str) -> np.ndarray:
        out = np.array([x[handle.index[t, role]] for t in range(T)])
        out[np.abs(out) < SNAP] = 0.0
        return out

    c, d, bc, bd = (pick(k) for k in POWER_ROLES)
    for arr in (c, d, bc, bd):
        arr[~handle.mask] = 0.0
        np.maximum(arr, 0.0, out=arr)
    energy = pick("e")
    revenue_fr, cost, sell, penalty = _money(handle.prices, handle.grid.step_hours,
                                              handle.ev.delta_penalty, handle.penalty_mode,
                                              handle.kappa, c, d, bc, bd)
    return Schedule(c, d, bc, bd, energy, handle.mask.copy(), revenue_fr, cost,
                    revenue_fr - cost + sell, handle.grid.step_hours, sell, penalty,
                    handle.start_step)


def reprice(schedule: Schedule, prices: PriceSeries, ev: EvParams,
            penalty_mode: str = PENALTY_UNIT, kappa: float = DEFAULT_KAPPA) -> Schedule:
    """The same physical schedule valued at different prices."""
    if len(prices) != schedule.steps:
        raise ValidationError("price length does not match the schedule", "prices")
    revenue_fr, cost, sell, penalty = _money(prices, schedule.step_hours, ev.delta_penalty,
                                              penalty_mode, kappa, schedule.c, schedule.d,
                                              schedule.bsup_c, schedule.bsup_d)
    return replace(schedule, revenue_fr=revenue_fr, cost_energy=cost,
                   revenue_net=revenue_fr - cost + sell, revenue_sell=sell, penalty=penalty)


def diagnose(handle: DayModelHandle) -> InfeasibleDayError:
    """Explain an infeasible day by how far the departure level falls short."""
    s = handle.start_step
    ev = handle.ev
    if s is None:
        return InfeasibleDayError("no feasible schedule meets the terminal level "
                                  f"e_end_min={ev.e_end_min}", None, math.nan)
    if s == 0:
        short = abs(ev.e_req - ev.e_start)
        return InfeasibleDayError(
            f"departure at step 0 needs e_req={ev.e_req} but the day opens at "
            f"e_start={ev.e_start}; shortfall {short:.3f} kWh", 0, short)
    # elastic copy: drop the departure and terminal rows, see how high E_{s-1} can go
    m = handle.model.relaxed()
    drop = {handle.rows["departure"], handle.rows["terminal"]}
    m.rows = [row for i, row in enumerate(m.rows) if i not in drop]
    m.obj = [0.0] * m.n
    target = handle.index[s - 1, "e"]
    m.obj[target] = 1.0
    sol = solve_lp(m)
    reach = sol.objective if sol.status is Status.OPTIMAL else ev.e_min
    short = max(ev.e_req - reach, 0.0)
    if short <= 1e-9:
        return InfeasibleDayError(
            f"departure level at step {s} is reachable but the terminal level "
            f"e_end_min={ev.e_end_min} is not", s, 0.0)
    return InfeasibleDayError(
        f"cannot reach e_req={ev.e_req} before departure at step {s}; "
        f"best reachable {reach:.3f} kWh, shortfall {short:.3f} kWh", s, short)


def solve_day(handle: DayModelHandle, gap: float = DEFAULT_GAP) -> Schedule:
    """Solve one EV-day; raise :class:`InfeasibleDayError` with a diagnostic."""
    sol = solve_mip(handle.model, gap)
    if sol.status is Status.INFEASIBLE:
        raise diagnose(handle)
    if sol.status is not Status.OPTIMAL:
        raise RuntimeError(f"day model is {sol.status.value}")
    return decode_solution(handle, sol)


def schedule_day(
    ev: EvParams,
    mask: np.ndarray,
    prices: PriceSeries,
    scenario: ScenarioKind,
    start_step: int | None,
    grid: TimeGrid,
    *,
    travel_energy: float = 0.0,
    penalty_mode: str = PENALTY_UNIT,
    kappa: float = DEFAULT_KAPPA,
    gap: float = DEFAULT_GAP,
) -> Schedule:
    """Dispatch one EV-day under ``scenario``; dumb charging bypasses the solver."""
    scenario = ScenarioKind.parse(scenario)
    if scenario is ScenarioKind.DUMB:
        return dumb_charge_schedule(ev, mask, prices, grid, travel_energy=travel_energy)
    handle = build_day_model(ev, mask, prices, scenario, start_step, grid,
                             travel_energy=travel_energy, penalty_mode=penalty_mode, kappa=kappa)
    return solve_day(handle, gap)


def dumb_charge_schedule(
    ev: EvParams,
    mask: np.ndarray,
    prices: PriceSeries,
    grid: TimeGrid,
    *,
    travel_energy: float = 0.0,
) -> Schedule:
    """Plug-in-and-charge baseline.

    Whenever the vehicle is plugged in and below ``e_req`` it charges as hard
    as the charger and remaining headroom allow, ignoring prices. That covers
    both the morning top-up before departure and the recharge on return.
    """
    mask = np.asarray(mask, dtype=bool)
    T, dt = grid.step_count, grid.step_hours
    s, r = trip_bounds(mask)
    etr_step = None if r is None else min(r, T - 1)
    c = np.zeros(T)
    energy = np.empty(T)
    level = ev.e_start
    notes = []
    for t in range(T):
        if t == etr_step:
            level -= travel_energy
        if mask[t] and level < ev.e_req:
            c[t] = min(ev.p_max, (ev.e_req - level) / (dt * ev.eta_c))
            level += c[t] * dt * ev.eta_c
            if abs(level - ev.e_req) < 1e-12:
                level = ev.e_req
        energy[t] = level
        if s is not None and t == s - 1 and level < ev.e_req - 1e-9:
            notes.append(f"departure at step {s} below e_req by {ev.e_req - level:.3f} kWh")
    if s == 0 and ev.e_start < ev.e_req - 1e-9:
        notes.append(f"departure at step 0 below e_req by {ev.e_req - ev.e_start:.3f} kWh")
    if level < ev.e_end_min - 1e-9:
        notes.append(f"day ends below e_end_min by {ev.e_end_min - level:.3f} kWh")
    for n in notes:
        log.warning("dumb charging: %s", n)
    zero = np.zeros(T)
    cost = float(np.dot(prices.buy, c) * dt)
    return Schedule(c, zero, zero, zero, energy, mask.copy(), 0.0, cost, -cost, dt,
                    start_step=s, status="incomplete" if notes else "optimal",
                    notes=tuple(notes))
