"""Command-line entry point: ``fleetv2g <command> [options]``.

Commands
    run          solve the configured fleet under every scenario, write reports
    schedule     solve one EV-day and print the schedule as JSON
    fleet-gen    sample a synthetic fleet and write it as CSV
    prices       evaluate the DC price pipeline on a system profile
    emissions    CCGTs and CO2 avoided for a given fleet DC volume
    sensitivity  price-scale and trip-delay studies
    report       merge several run directories into one summary

Exit codes: 0 success, 1 run-time failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .charging import InfeasibleDayError, schedule_day
from .config import RunConfig, load_config, resolve
from .core import ScenarioKind, ValidationError, validate
from .emissions import EMISSIONS_HEADER, co2_avoided, hourly_avoided, profile_baselines
from .fleet import FLEET_KINDS, synthesize_fleet, write_fleet
from .frprices import SERIES_HEADER, build_price_series, price_series_rows
from .runner import (
    csv_text, dumps, merge_reports, run_scenario, run_sensitivity_delay, run_sensitivity_price,
    schedule_csv, write_atomic,
)
from .trips import NoFeasibleStartError, optimize_trip, solve_start

log = logging.getLogger("fleetv2g")


class UsageError(Exception):
    """Bad arguments discovered after parsing."""


def _scenario(text: str) -> ScenarioKind:
    try:
        return ScenarioKind.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {value}")
    return value


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def common_options() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="TOML run configuration (default: built-in defaults)")
    p.add_argument("--seed", type=int, help="override the fleet sampling seed")
    p.add_argument("--out", help="output directory (or file, where noted)")
    p.add_argument("--scenario", type=_scenario, action="append",
                   help="dumb, smart, current-fr or future-fr; repeatable")
    p.add_argument("--jobs", type=_positive_int, help="worker processes")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress and warnings")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = common_options()
    parser = argparse.ArgumentParser(prog="fleetv2g", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("run", parents=[common], help="fleet run over all scenarios")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("schedule", parents=[common], help="solve a single EV-day")
    p.add_argument("--start", type=int,
                   help="fixed departure step; default searches every admissible start")
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("fleet-gen", parents=[common], help="sample a synthetic fleet")
    p.add_argument("--fleet", choices=FLEET_KINDS, help="fleet kind")
    p.add_argument("--season", choices=("summer", "winter"))
    p.add_argument("--n", type=_positive_int, help="number of vehicles")
    p.set_defaults(func=cmd_fleet_gen)

    p = sub.add_parser("prices", parents=[common], help="hourly price series from a profile")
    p.add_argument("--profile", help="system profile CSV (hour,demand_mw,wind_mw,solar_mw)")
    p.set_defaults(func=cmd_prices)

    p = sub.add_parser("emissions", parents=[common], help="CCGTs and CO2 avoided")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--dc-mw", type=float, help="fleet DC availability, MW, every hour")
    src.add_argument("--dc-csv", help="CSV with hour,dc_ev_mw columns")
    p.add_argument("--profile", help="system profile CSV; default from the config")
    p.set_defaults(func=cmd_emissions)

    p = sub.add_parser("sensitivity", parents=[common], help="price and delay studies")
    p.add_argument("--study", choices=("price", "delay", "both"), default="both")
    p.add_argument("--scales", type=_floats, help="FR price scales, e.g. 1,0.75,0.5")
    p.add_argument("--delays", type=_ints, help="trip extensions in steps, e.g. 1,2")
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("report", parents=[common], help="merge run outputs")
    p.add_argument("runs", nargs="+", help="run directories or summary.json files")
    p.set_defaults(func=cmd_report)
    return parser


# ----------------------------------------------------------------- helpers

def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.jobs is not None:
        cfg = replace(cfg, jobs=args.jobs)
    if args.scenario:
        cfg = replace(cfg, scenarios=tuple(dict.fromkeys(args.scenario)))
    return cfg


def _emit(text: str, out: str | None, default_name: str | None = None) -> None:
    """Write to ``out`` (a directory gets ``default_name``) or to stdout."""
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    if default_name is not None and (path.is_dir() or not path.suffix):
        path = path / default_name
    write_atomic(path, text)
    log.info("wrote %s", path)


def _one_scenario(cfg: RunConfig, args, default: ScenarioKind) -> ScenarioKind:
    if args.scenario and len(args.scenario) > 1:
        raise UsageError("this command takes a single --scenario")
    if args.scenario:
        return args.scenario[0]
    return cfg.scenarios[0] if len(cfg.scenarios) == 1 else default


# ---------------------------------------------------------------- commands

def cmd_run(args) -> int:
    cfg = _config(args)
    out = Path(args.out or "out")
    report = run_scenario(cfg, out, jobs=cfg.jobs)
    for sc, body in report.summary["scenarios"].items():
        print(f"{sc:>10}: original {body['original']['revenue_net_gbp']:.4f} GBP, "
              f"optimal {body['optimal']['revenue_net_gbp']:.4f} GBP, "
              f"infeasible {len(body['infeasible'])}")
    print(f"reports written to {out}")
    return 1 if report.total_failure else 0


def cmd_schedule(args) -> int:
    cfg = _config(args)
    scenario = _one_scenario(cfg, args, ScenarioKind.FUTURE_FR)
    prices = cfg.prices(scenario)
    opts = dict(penalty_mode=cfg.penalty_mode, kappa=cfg.kappa, gap=cfg.gap)
    doc: dict = {"scenario": scenario.value}
    try:
        if cfg.trip is None:
            if args.start is not None:
                raise UsageError("--start needs a [trip] section in the config")
            problems = validate(cfg.ev, None, prices, cfg.grid)
            if problems:
                raise ValidationError("; ".join(problems))
            mask = np.ones(cfg.grid.step_count, dtype=bool)
            sched = schedule_day(cfg.ev, mask, prices, scenario, None, cfg.grid, **opts)
        elif args.start is not None:
            problems = validate(cfg.ev, cfg.trip, prices, cfg.grid)
            if problems:
                raise ValidationError("; ".join(problems))
            sched = solve_start(cfg.ev, cfg.trip, prices, scenario, cfg.grid, args.start, **opts)
        else:
            result = optimize_trip(cfg.ev, cfg.trip, prices, scenario, cfg.grid, **opts)
            sched = result.schedule
            doc["candidates"] = [{"start_step": c.start_step, "feasible": c.feasible,
                                  "revenue_gbp": None if not c.feasible else round(c.revenue, 4)}
                                 for c in result.candidates]
    except (InfeasibleDayError, NoFeasibleStartError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    doc["revenue_net_gbp"] = round(sched.revenue_net, 4)
    doc["schedule"] = sched.to_dict()
    text = dumps(doc)
    sys.stdout.write(text)
    if args.out:
        write_atomic(Path(args.out) / "schedule.json", text)
        write_atomic(Path(args.out) / "schedule.csv", schedule_csv(sched))
    return 0


def cmd_fleet_gen(args) -> int:
    cfg = _config(args)
    kind = args.fleet or cfg.fleet_kind
    season = args.season or cfg.season
    n = args.n or cfg.fleet_size
    fleet = synthesize_fleet(kind, season, n, cfg.seed, cfg.grid)
    buf = io.StringIO()
    write_fleet(fleet, buf)
    _emit(buf.getvalue(), args.out, f"fleet_{kind}_{season}.csv")
    return 0


def cmd_prices(args) -> int:
    cfg = _config(args)
    if args.profile:
        cfg = replace(cfg, profile_csv=resolve(args.profile))
    scenario = _one_scenario(cfg, args, ScenarioKind.FUTURE_FR)
    buy, sell = cfg.energy_prices()
    series = build_price_series(cfg.profile(), cfg.system, scenario, cfg.current_fr_price,
                                buy, sell, grid=cfg.grid)
    series = series.with_fr(series.fr * cfg.fr_scale)
    _emit(csv_text(SERIES_HEADER, price_series_rows(series, cfg.grid)), args.out,
          f"prices_{scenario.value}.csv")
    return 0


def _read_dc_csv(path: Path, cfg: RunConfig) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = {int(float(r["hour"])): float(r["dc_ev_mw"]) for r in csv.DictReader(fh)}
    try:
        return np.array([rows[int(cfg.grid.hour_of_day(t))] for t in range(cfg.grid.step_count)])
    except KeyError as exc:
        raise ValidationError(f"{path}: no dc_ev_mw for hour {exc.args[0]}", "hour") from None


def cmd_emissions(args) -> int:
    cfg = _config(args)
    if args.profile:
        cfg = replace(cfg, profile_csv=resolve(args.profile))
    if args.dc_csv:
        mw = _read_dc_csv(resolve(args.dc_csv), cfg)
    else:
        mw = np.full(cfg.grid.step_count, args.dc_mw)
    if np.any(mw < 0) or np.any(mw > cfg.system.dc_volume):
        raise ValidationError(f"dc_ev_mw must lie in [0, {cfg.system.dc_volume}]", "dc_ev_mw")
    x = hourly_avoided(profile_baselines(cfg.profile(), cfg.system), mw, cfg.system, cfg.ccgt)
    x_mean = float(np.mean(x))
    rows = [(int(cfg.grid.hour_of_day(t)), f"{mw[t]:.6f}", f"{x[t]:.6f}") for t in range(len(x))]
    summary = {"x_mean": round(x_mean, 6),
               "kg_co2": round(co2_avoided(x_mean, cfg.emissions.hours, cfg.ccgt,
                                           cfg.emissions.energy_basis_mw), 3),
               "energy_basis_mw": cfg.emissions.energy_basis_mw,
               "hours": cfg.emissions.hours}
    if args.out:
        out = Path(args.out)
        write_atomic(out / "emissions.csv", csv_text(EMISSIONS_HEADER, rows))
        write_atomic(out / "emissions_summary.json", dumps(summary))
    else:
        sys.stdout.write(csv_text(EMISSIONS_HEADER, rows))
    print(json.dumps(summary, sort_keys=True), file=sys.stderr if not args.out else sys.stdout)
    return 0


def cmd_sensitivity(args) -> int:
    cfg = _config(args)
    scenario = _one_scenario(cfg, args, ScenarioKind.FUTURE_FR)
    out = Path(args.out or "out")
    if args.study in ("price", "both"):
        doc = run_sensitivity_price(cfg, args.scales, jobs=cfg.jobs, scenario=scenario)
        write_atomic(out / "sensitivity_price.json", dumps(doc))
        for r in doc["results"]:
            print(f"price x{r['scale']:g}: optimal {r['optimal']['revenue_net_gbp']:.4f} GBP, "
                  f"uplift {r['uplift_net_pct']}%")
    if args.study in ("delay", "both"):
        doc = run_sensitivity_delay(cfg, args.delays, jobs=cfg.jobs, scenario=scenario)
        write_atomic(out / "sensitivity_delay.json", dumps(doc))
        for r in doc["results"]:
            print(f"delay +{r['delay_steps']}: optimal {r['optimal_revenue_net_gbp']:.4f} GBP, "
                  f"reduction {r['reduction_pct']}%")
    return 0


def cmd_report(args) -> int:
    doc = merge_reports(args.runs)
    _emit(dumps(doc), args.out, "report.json")
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (ValidationError, FileNotFoundError) as exc:
        print(f"fleetv2g: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
