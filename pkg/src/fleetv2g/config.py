"""Run configuration loaded from TOML.

Relative file paths resolve against the config file's directory first and
then against the data files shipped with the package, so ``profile_summer.csv``
works from anywhere. See ``docs/config.md`` for every key.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from .charging import DEFAULT_KAPPA, PENALTY_UNIT
from .core import EvParams, PriceSeries, ScenarioKind, TimeGrid, TripSpec, ValidationError
from .emissions import CcgtParams
from .fleet import FLEET_KINDS, FleetEv, read_fleet, synthesize_fleet
from .frprices import (
    SystemParams, SystemProfile, build_price_series, read_energy_prices, read_profile,
)
from .lpmip import DEFAULT_GAP

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DATA_DIR = Path(__file__).parent / "data"
ALL_SCENARIOS = tuple(ScenarioKind)
DEFAULT_CURRENT_FR = 17.0  # GBP/MW/h, flat all day


@dataclass(frozen=True)
class EmissionsConfig:
    energy_basis_mw: float = 250.0
    hours: float = 720.0
    fleet_size: int = 5000


@dataclass(frozen=True, eq=False)
class RunConfig:
    grid: TimeGrid = field(default_factory=TimeGrid)
    ev: EvParams = field(default_factory=EvParams)
    system: SystemParams = field(default_factory=SystemParams)
    ccgt: CcgtParams = field(default_factory=CcgtParams)
    emissions: EmissionsConfig = field(default_factory=EmissionsConfig)
    scenarios: tuple[ScenarioKind, ...] = ALL_SCENARIOS
    gap: float = DEFAULT_GAP
    seed: int = 7
    jobs: int = 1
    penalty_mode: str = PENALTY_UNIT
    kappa: float = DEFAULT_KAPPA
    fleet_kind: str = "maintenance"
    season: str = "summer"
    fleet_size: int = 100
    fleet_csv: Path | None = None
    profile_csv: Path | None = None
    energy_csv: Path | None = None
    current_fr_price: float = DEFAULT_CURRENT_FR
    fr_scale: float = 1.0
    inline_prices: PriceSeries | None = None
    trip: TripSpec | None = None
    price_scales: tuple[float, ...] = (1.0, 0.75, 0.5)
    delays: tuple[int, ...] = (1, 2)
    require_full_day: bool = True

    # ---------------------------------------------------------- derived data

    def profile(self) -> SystemProfile:
        path = self.profile_csv or resolve(f"profile_{self.season}.csv")
        return read_profile(path).aligned(self.grid)

    def energy_prices(self) -> tuple[np.ndarray, np.ndarray]:
        if self.inline_prices is not None:
            return np.array(self.inline_prices.buy), np.array(self.inline_prices.sell)
        path = self.energy_csv or resolve(f"energy_{self.season}.csv")
        return read_energy_prices(path, self.grid)

    def prices(self, scenario: ScenarioKind) -> PriceSeries:
        scenario = ScenarioKind.parse(scenario)
        if self.inline_prices is not None:
            p = self.inline_prices
            fr = p.fr if scenario.fr_enabled else np.zeros(len(p))
            return PriceSeries(p.buy, p.sell, np.asarray(fr) * self.fr_scale)
        buy, sell = self.energy_prices()
        series = build_price_series(self.profile(), self.system, scenario, self.current_fr_price,
                                    buy, sell, grid=self.grid)
        return series.with_fr(series.fr * self.fr_scale)

    def fleet(self) -> list[FleetEv]:
        if self.fleet_csv is not None:
            return read_fleet(self.fleet_csv, self.grid)
        if self.trip is not None:
            return [FleetEv("EV0", self.fleet_kind, self.trip)]
        if abs(self.grid.step_count * self.grid.step_hours - 24.0) > 1e-9:
            raise ValidationError("synthetic fleets need a full-day grid; give a [trip] "
                                  "section or [fleet] csv instead", "fleet")
        return synthesize_fleet(self.fleet_kind, self.season, self.fleet_size, self.seed,
                                self.grid)

    def describe(self) -> dict:
        """Stable, path-free summary of the settings that shape the results."""
        return {
            "fleet_kind": self.fleet_kind,
            "season": self.season,
            "fleet_source": (self.fleet_csv.name if self.fleet_csv else
                             "inline" if self.trip else f"synthetic(n={self.fleet_size})"),
            "seed": self.seed,
            "gap": self.gap,
            "scenarios": [s.value for s in self.scenarios],
            "penalty_mode": self.penalty_mode,
            "kappa_gbp_per_kwh": self.kappa,
            "delta_penalty": self.ev.delta_penalty,
            "current_fr_gbp_per_mw_h": self.current_fr_price,
            "fr_scale": self.fr_scale,
            "steps": self.grid.step_count,
            "step_hours": self.grid.step_hours,
            "start_hour_of_day": self.grid.start_hour_of_day,
        }


def resolve(name: str | Path, base: Path | None = None) -> Path:
    p = Path(name)
    if p.is_absolute():
        candidates = [p]
    else:
        candidates = ([base / p] if base is not None else []) + [Path.cwd() / p, DATA_DIR / p]
    for c in candidates:
        if c.exists():
            return c
    raise ValidationError(f"file not found: {name}", "path")


def _build(cls, table: dict, section: str):
    known = {f.name for f in fields(cls)}
    extra = sorted(set(table) - known)
    if extra:
        raise ValidationError(f"[{section}] has unknown keys {extra}", section)
    return cls(**table)


def _take(table: dict, key: str, default: Any) -> Any:
    return table.pop(key, default)


def from_dict(data: dict, base: Path | None = None) -> RunConfig:
    data = {k: (dict(v) if isinstance(v, dict) else v) for k, v in data.items()}
    kw: dict[str, Any] = {}
    grid_t = data.pop("grid", {})
    kw["require_full_day"] = bool(_take(grid_t, "require_full_day", True))
    kw["grid"] = _build(TimeGrid, grid_t, "grid")

    ev_t = data.pop("ev", {})
    kw["penalty_mode"] = _take(ev_t, "penalty_mode", PENALTY_UNIT)
    kw["kappa"] = float(_take(ev_t, "kappa", DEFAULT_KAPPA))
    capacity = _take(ev_t, "capacity_kwh", None)
    kw["ev"] = (EvParams.from_capacity(capacity, **ev_t) if capacity is not None
                else _build(EvParams, ev_t, "ev"))

    kw["system"] = _build(SystemParams, data.pop("system", {}), "system")
    kw["ccgt"] = _build(CcgtParams, data.pop("ccgt", {}), "ccgt")
    kw["emissions"] = _build(EmissionsConfig, data.pop("emissions", {}), "emissions")

    fleet_t = data.pop("fleet", {})
    kw["fleet_kind"] = _take(fleet_t, "kind", "maintenance")
    if kw["fleet_kind"] not in FLEET_KINDS:
        raise ValidationError(f"unknown fleet kind {kw['fleet_kind']!r}", "fleet.kind")
    kw["season"] = _take(fleet_t, "season", "summer")
    kw["fleet_size"] = int(_take(fleet_t, "n", 100))
    csv_name = _take(fleet_t, "csv", None)
    kw["fleet_csv"] = resolve(csv_name, base) if csv_name else None
    if fleet_t:
        raise ValidationError(f"[fleet] has unknown keys {sorted(fleet_t)}", "fleet")

    trip_t = data.pop("trip", None)
    if trip_t is not None:
        kw["trip"] = _build(TripSpec, trip_t, "trip")

    price_t = data.pop("prices", {})
    for key, attr in (("profile_csv", "profile_csv"), ("energy_csv", "energy_csv")):
        name = _take(price_t, key, None)
        kw[attr] = resolve(name, base) if name else None
    kw["current_fr_price"] = float(_take(price_t, "current_fr_gbp_per_mw_h", DEFAULT_CURRENT_FR))
    kw["fr_scale"] = float(_take(price_t, "fr_scale", 1.0))
    inline = {k: _take(price_t, k, None) for k in ("buy", "sell", "fr")}
    if any(v is not None for v in inline.values()):
        n = kw["grid"].step_count
        kw["inline_prices"] = PriceSeries(*(np.asarray(inline[k] if inline[k] is not None
                                                       else np.zeros(n), dtype=float)
                                            for k in ("buy", "sell", "fr")))
    if price_t:
        raise ValidationError(f"[prices] has unknown keys {sorted(price_t)}", "prices")

    run_t = data.pop("run", {})
    if "scenarios" in run_t:
        kw["scenarios"] = tuple(ScenarioKind.parse(s) for s in run_t.pop("scenarios"))
    if "price_scales" in run_t:
        kw["price_scales"] = tuple(float(x) for x in run_t.pop("price_scales"))
    if "delays" in run_t:
        kw["delays"] = tuple(int(x) for x in run_t.pop("delays"))
    for key, cast in (("gap", float), ("seed", int), ("jobs", int)):
        if key in run_t:
            kw[key] = cast(run_t.pop(key))
    if run_t:
        raise ValidationError(f"[run] has unknown keys {sorted(run_t)}", "run")
    if data:
        raise ValidationError(f"unknown sections {sorted(data)}", "config")

    cfg = RunConfig(**kw)
    problems = cfg.grid.violations(cfg.require_full_day) + cfg.ev.violations()
    problems += cfg.system.violations()
    if cfg.gap < 0:
        problems.append(f"gap must be non-negative (gap={cfg.gap})")
    if cfg.jobs < 1:
        problems.append(f"jobs must be at least 1 (jobs={cfg.jobs})")
    if problems:
        raise ValidationError("; ".join(problems), "config")
    return cfg


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return from_dict({})
    path = resolve(path)
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    return from_dict(data, path.parent)
