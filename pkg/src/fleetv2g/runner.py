"""Fleet-level scenario runs, sensitivity sweeps and report files.

Every candidate solve across (scenario, vehicle, start step) is one task.
Tasks go through a worker pool in a fixed order and come back in that order,
so the reports do not depend on the number of workers.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .config import RunConfig
from .core import PriceSeries, ScenarioKind, Schedule, TripSpec, SCHEDULE_CSV_HEADER
from .emissions import (
    EMISSIONS_HEADER, co2_avoided, fleet_dc_mw, hourly_avoided, profile_baselines,
)
from .fleet import FleetEv
from .trips import (
    CANDIDATE_CSV_HEADER, NoFeasibleStartError, TripResult, candidate_jobs, reduce_candidates,
    solve_candidate,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
PER_EV_HEADER = (
    "ev_id", "scenario", "status", "original_start_step", "optimal_start_step",
    "original_revenue_fr_gbp", "original_cost_energy_gbp", "original_revenue_net_gbp",
    "optimal_revenue_fr_gbp", "optimal_cost_energy_gbp", "optimal_revenue_net_gbp",
    "original_discharged_kwh", "optimal_discharged_kwh",
)


def gbp(x: float) -> float:
    return round(float(x), 4)


def kwh(x: float) -> float:
    return round(float(x), 3)


@dataclass(frozen=True)
class EvOutcome:
    ev: FleetEv
    scenario: ScenarioKind
    trip: TripSpec
    original: Schedule | None
    optimal: TripResult | None
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.optimal is not None


def _map(tasks: list, jobs: int) -> list:
    if jobs <= 1 or len(tasks) <= 1:
        return [solve_candidate(t) for t in tasks]
    chunk = max(1, len(tasks) // (jobs * 8))
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(solve_candidate, tasks, chunksize=chunk))


def solve_fleet(
    cfg: RunConfig,
    fleet: Sequence[FleetEv],
    scenarios: Sequence[ScenarioKind],
    *,
    jobs: int = 1,
    prices: Callable[[ScenarioKind], PriceSeries] | None = None,
    trips: Sequence[TripSpec] | None = None,
) -> dict[ScenarioKind, list[EvOutcome]]:
    """Original-start and best-start schedules for every vehicle and scenario."""
    price_of = prices or cfg.prices
    trips = list(trips) if trips is not None else [ev.trip for ev in fleet]
    options = dict(penalty_mode=cfg.penalty_mode, kappa=cfg.kappa, gap=cfg.gap)
    tasks: list = []
    groups: list[tuple[ScenarioKind, int, int, str]] = []
    for sc in scenarios:
        series = price_of(sc)
        for i, ev in enumerate(fleet):
            try:
                js = candidate_jobs(cfg.ev, trips[i], series, sc, cfg.grid, **options)
                err = ""
            except ValueError as exc:
                js, err = [], str(exc)
            groups.append((sc, i, len(js), err))
            tasks.extend(js)

    results = _map(tasks, jobs)
    out: dict[ScenarioKind, list[EvOutcome]] = {sc: [] for sc in scenarios}
    pos = 0
    for sc, i, n, err in groups:
        chunk = results[pos:pos + n]
        pos += n
        trip = trips[i]
        original = next((s for st, s, _ in chunk if st == trip.original_start_step), None)
        best = None
        if not err:
            try:
                best = reduce_candidates(chunk)
            except NoFeasibleStartError as exc:
                err = str(exc)
        if err:
            log.warning("%s / %s: %s", fleet[i].ev_id, sc.value, err)
        out[sc].append(EvOutcome(fleet[i], sc, trip, original, best, err))
    return out


def _totals(scheds: Iterable[Schedule | None]) -> dict:
    s = [x for x in scheds if x is not None]
    return {
        "revenue_fr_gbp": gbp(sum(x.revenue_fr for x in s)),
        "cost_energy_gbp": gbp(sum(x.cost_energy for x in s)),
        "revenue_net_gbp": gbp(sum(x.revenue_net for x in s)),
        "penalty_gbp": gbp(sum(x.penalty for x in s)),
        "discharged_kwh": kwh(sum(x.discharged_kwh for x in s)),
        "vehicles": len(s),
    }


def uplift_pct(original: float, optimal: float) -> float | None:
    if abs(original) < 1e-12:
        return None
    return round(100.0 * (optimal - original) / abs(original), 4)


def scenario_summary(outcomes: Sequence[EvOutcome]) -> dict:
    orig = _totals(o.original for o in outcomes)
    opt = _totals(o.optimal.schedule if o.optimal else None for o in outcomes)
    return {
        "original": orig,
        "optimal": opt,
        "uplift_net_pct": uplift_pct(orig["revenue_net_gbp"], opt["revenue_net_gbp"]),
        "infeasible": [{"ev_id": o.ev.ev_id, "reason": o.error}
                       for o in outcomes if not o.ok],
    }


def emissions_summary(cfg: RunConfig, outcomes: Sequence[EvOutcome]) -> tuple[dict, list[tuple]]:
    """Hourly and monthly CCGT displacement from the fleet's DC availability."""
    base = profile_baselines(cfg.profile(), cfg.system)
    out: dict = {"scenario": outcomes[0].scenario.value if outcomes else None,
                 "energy_basis_mw": cfg.emissions.energy_basis_mw,
                 "hours": cfg.emissions.hours, "fleet_size": cfg.emissions.fleet_size}
    rows: list[tuple] = []
    for label, pick in (("original", lambda o: o.original),
                        ("optimal", lambda o: o.optimal.schedule if o.optimal else None)):
        dc = [pick(o).dc_kw for o in outcomes if pick(o) is not None]
        if not dc:
            continue
        mw = fleet_dc_mw(dc, cfg.emissions.fleet_size)
        x = hourly_avoided(base, mw, cfg.system, cfg.ccgt)
        x_mean = float(np.mean(x))
        out[label] = {
            "x_mean": round(x_mean, 6),
            "kg_co2": round(co2_avoided(x_mean, cfg.emissions.hours, cfg.ccgt,
                                        cfg.emissions.energy_basis_mw), 3),
            "dc_mean_mw": round(float(np.mean(mw)), 6),
        }
        if label == "optimal":
            rows = [(int(cfg.grid.hour_of_day(t)), f"{mw[t]:.6f}", f"{x[t]:.6f}")
                    for t in range(len(mw))]
    return out, rows


def _emissions_source(outcomes: dict[ScenarioKind, list[EvOutcome]]) -> list[EvOutcome] | None:
    for sc in (ScenarioKind.FUTURE_FR, ScenarioKind.CURRENT_FR):
        if sc in outcomes:
            return outcomes[sc]
    return None


# ------------------------------------------------------------- file output

def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _fmt(x: float | None, digits: int) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.{digits}f}"


def per_ev_rows(outcomes: dict[ScenarioKind, list[EvOutcome]]) -> list[tuple]:
    rows = []
    for sc, outs in outcomes.items():
        for o in outs:
            a, b = o.original, o.optimal.schedule if o.optimal else None
            rows.append((
                o.ev.ev_id, sc.value, "ok" if o.ok else "infeasible",
                o.trip.original_start_step, o.optimal.best_start if o.optimal else "",
                _fmt(a and a.revenue_fr, 4), _fmt(a and a.cost_energy, 4),
                _fmt(a and a.revenue_net, 4), _fmt(b and b.revenue_fr, 4),
                _fmt(b and b.cost_energy, 4), _fmt(b and b.revenue_net, 4),
                _fmt(a and a.discharged_kwh, 3), _fmt(b and b.discharged_kwh, 3),
            ))
    return rows


def candidate_rows(result: TripResult) -> list[tuple]:
    return [(c.start_step, int(c.feasible), _fmt(c.revenue, 4)) for c in result.candidates]


def schedule_csv(s: Schedule) -> str:
    rows = [(t, conn, f"{c:.3f}", f"{d:.3f}", f"{bc:.3f}", f"{bd:.3f}", f"{e:.3f}")
            for t, conn, c, d, bc, bd, e in s.csv_rows()]
    return csv_text(SCHEDULE_CSV_HEADER, rows)


@dataclass(frozen=True)
class RunReport:
    summary: dict
    outcomes: dict[ScenarioKind, list[EvOutcome]]
    emissions_rows: list[tuple]

    @property
    def total_failure(self) -> bool:
        return not any(o.ok for outs in self.outcomes.values() for o in outs)


def run_scenario(cfg: RunConfig, out_dir: str | Path | None = None, *,
                 jobs: int | None = None) -> RunReport:
    """Solve the configured fleet under every scenario and write the reports."""
    fleet = cfg.fleet()
    outcomes = solve_fleet(cfg, fleet, cfg.scenarios, jobs=jobs or cfg.jobs)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.describe(),
        "fleet_size": len(fleet),
        "scenarios": {sc.value: scenario_summary(outs) for sc, outs in outcomes.items()},
    }
    em_rows: list[tuple] = []
    src = _emissions_source(outcomes)
    if src:
        summary["emissions"], em_rows = emissions_summary(cfg, src)
    report = RunReport(summary, outcomes, em_rows)
    if out_dir is not None:
        write_run(report, Path(out_dir))
    return report


def write_run(report: RunReport, out: Path) -> None:
    write_atomic(out / "per_ev.csv", csv_text(PER_EV_HEADER, per_ev_rows(report.outcomes)))
    for sc, outs in report.outcomes.items():
        for o in outs:
            if o.optimal is not None:
                write_atomic(out / "candidates" / sc.value / f"candidates_{o.ev.ev_id}.csv",
                             csv_text(CANDIDATE_CSV_HEADER, candidate_rows(o.optimal)))
    if report.emissions_rows:
        write_atomic(out / "emissions.csv", csv_text(EMISSIONS_HEADER, report.emissions_rows))
    write_atomic(out / "summary.json", dumps(report.summary))


# ------------------------------------------------------------ sensitivities

def run_sensitivity_price(cfg: RunConfig, scales: Sequence[float] | None = None, *,
                          jobs: int | None = None,
                          scenario: ScenarioKind = ScenarioKind.FUTURE_FR) -> dict:
    """Re-solve the fleet with the FR price series scaled."""
    scales = list(scales if scales is not None else cfg.price_scales)
    fleet = cfg.fleet()
    rows = []
    for k in scales:
        scaled = replace(cfg, fr_scale=cfg.fr_scale * k)
        outs = solve_fleet(scaled, fleet, [scenario], jobs=jobs or cfg.jobs)[scenario]
        s = scenario_summary(outs)
        rows.append({"scale": k, "original": s["original"], "optimal": s["optimal"],
                     "uplift_net_pct": s["uplift_net_pct"],
                     "infeasible": len(s["infeasible"])})
    return {"schema_version": SCHEMA_VERSION, "study": "price", "scenario": scenario.value,
            "config": cfg.describe(), "results": rows}


def delayed_trip(trip: TripSpec, delay: int) -> tuple[TripSpec, str]:
    """Extend a trip by ``delay`` steps, sliding or trimming it to stay in its window."""
    width = trip.window_end_step - trip.window_start_step
    dur = trip.duration_steps + delay
    note = ""
    if dur > width:
        note = f"duration {dur} trimmed to window width {width}"
        dur = width
    start = trip.original_start_step
    if start + dur > trip.window_end_step:
        new_start = trip.window_end_step - dur
        note = (note + "; " if note else "") + f"original start moved {start} -> {new_start}"
        start = new_start
    return replace(trip, duration_steps=dur, original_start_step=start), note


def run_sensitivity_delay(cfg: RunConfig, delays: Sequence[int] | None = None, *,
                          jobs: int | None = None,
                          scenario: ScenarioKind = ScenarioKind.FUTURE_FR) -> dict:
    """Re-solve best starts with every trip lengthened by each delay."""
    delays = [0] + [d for d in (delays if delays is not None else cfg.delays) if d != 0]
    fleet = cfg.fleet()
    results = []
    base_total = None
    per_ev_base: dict[str, float] = {}
    for k in delays:
        trips, notes = [], []
        for ev in fleet:
            t, note = delayed_trip(ev.trip, k)
            trips.append(t)
            if note:
                log.warning("%s delay %d: %s", ev.ev_id, k, note)
                notes.append({"ev_id": ev.ev_id, "note": note})
        outs = solve_fleet(cfg, fleet, [scenario], jobs=jobs or cfg.jobs, trips=trips)[scenario]
        total = sum(o.optimal.revenue for o in outs if o.ok)
        if k == 0:
            base_total = total
            per_ev_base = {o.ev.ev_id: o.optimal.revenue for o in outs if o.ok}
        worse = sum(1 for o in outs if o.ok and o.ev.ev_id in per_ev_base
                    and o.optimal.revenue > per_ev_base[o.ev.ev_id] + 1e-6)
        results.append({
            "delay_steps": k,
            "optimal_revenue_net_gbp": gbp(total),
            "reduction_gbp": gbp(base_total - total),
            "reduction_pct": (round(100.0 * (base_total - total) / abs(base_total), 4)
                              if abs(base_total) > 1e-12 else None),
            "vehicles_with_higher_revenue": worse,
            "adjusted_trips": notes,
            "infeasible": sum(1 for o in outs if not o.ok),
        })
    return {"schema_version": SCHEMA_VERSION, "study": "delay", "scenario": scenario.value,
            "config": cfg.describe(), "results": results}


def merge_reports(paths: Sequence[str | Path]) -> dict:
    """Combine several run directories' summaries into one document."""
    runs = []
    for p in paths:
        p = Path(p)
        f = p / "summary.json" if p.is_dir() else p
        with open(f) as fh:
            data = json.load(fh)
        runs.append({"name": f.parent.name, "summary": data})
    table = []
    for r in runs:
        for sc, body in r["summary"].get("scenarios", {}).items():
            table.append({"run": r["name"], "scenario": sc,
                          "original_revenue_net_gbp": body["original"]["revenue_net_gbp"],
                          "optimal_revenue_net_gbp": body["optimal"]["revenue_net_gbp"],
                          "uplift_net_pct": body["uplift_net_pct"]})
    return {"schema_version": SCHEMA_VERSION, "runs": runs, "table": table}
