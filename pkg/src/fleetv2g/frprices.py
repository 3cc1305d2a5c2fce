"""Hourly Dynamic Containment prices from a low-inertia system model.

The chain per hour is: net demand, synchronous inertia (nuclear first, then
CCGTs, floored by the RoCoF limit), the PFR volume the frequency-nadir
condition demands, and finally the DC price as the PFR cost one extra MW of
DC would save. System quantities are in MW and GBP/MW/h; the output series
is converted to GBP/kW/h for the vehicle models.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import PriceSeries, ScenarioKind, TimeGrid, ValidationError

PFR_DELIVERY_S = 10.0
DC_DELIVERY_S = 1.0
PROFILE_HEADER = ("hour", "demand_mw", "wind_mw", "solar_mw")
ENERGY_HEADER = ("hour", "buy_gbp_per_kwh", "sell_gbp_per_kwh")
SERIES_HEADER = ("hour", "buy", "sell", "fr_gbp_per_kw")


class InertiaTooLowError(ValueError):
    """The nadir condition cannot be met at this inertia and DC volume."""


@dataclass(frozen=True)
class SystemParams:
    f0: float = 50.0
    p_infeed: float = 1800.0
    rocof_limit: float = 1.0
    delta_f_max: float = 0.8
    dc_volume: float = 1000.0
    pfr_price: float = 10.0
    nuclear_capacity: float = 5000.0
    inertia_constant: float = 5.0

    def violations(self) -> list[str]:
        out = [f"{k} must be positive ({k}={v})" for k, v in vars(self).items() if not v > 0]
        if self.delta_f_max >= self.f0:
            out.append(f"delta_f_max must be below f0 (delta_f_max={self.delta_f_max}, f0={self.f0})")
        return out


@dataclass(frozen=True)
class SystemHour:
    demand: float
    wind: float
    solar: float
    net_demand: float
    inertia: float
    pfr_required: float
    dc_price: float


@dataclass(frozen=True, eq=False)
class SystemProfile:
    """Hour-of-day national demand and renewable output, MW."""

    hours: np.ndarray
    demand: np.ndarray
    wind: np.ndarray
    solar: np.ndarray

    def __len__(self) -> int:
        return len(self.demand)

    def aligned(self, grid: TimeGrid) -> "SystemProfile":
        """Reorder so index 0 matches the grid's opening hour."""
        order = [int(np.flatnonzero(self.hours == int(grid.hour_of_day(t)))[0])
                 if np.any(self.hours == int(grid.hour_of_day(t)))
                 else _missing(int(grid.hour_of_day(t)))
                 for t in range(grid.step_count)]
        return SystemProfile(self.hours[order], self.demand[order], self.wind[order],
                             self.solar[order])


def _missing(hour: int):
    raise ValidationError(f"profile has no row for hour {hour}", "hour")


def inertia_floor(p: SystemParams) -> float:
    """Smallest inertia (MVA s) that keeps RoCoF within its limit."""
    return p.p_infeed * p.f0 / (2.0 * p.rocof_limit)


def net_demand(demand: float, wind: float, solar: float) -> float:
    return max(demand - wind - solar, 0.0)


def system_inertia(demand: float, wind: float, solar: float, p: SystemParams) -> float:
    if demand < 0 or wind < 0 or solar < 0:
        raise ValidationError("demand, wind and solar must be non-negative")
    nd = net_demand(demand, wind, solar)
    nuclear = min(p.nuclear_capacity, nd)
    ccgt = nd - nuclear
    return max(p.inertia_constant * (nuclear + ccgt), inertia_floor(p))


def required_pfr(H: float, dc: float, p: SystemParams) -> float:
    """PFR (MW) that makes the nadir condition hold with equality."""
    residual = p.p_infeed - dc
    if residual <= 0:
        return 0.0
    denom = H / p.f0 - dc * DC_DELIVERY_S / (4.0 * p.delta_f_max)
    if denom <= 0:
        raise InertiaTooLowError(
            f"inertia too low for DC volume: H={H} MVA s cannot support DC={dc} MW")
    return PFR_DELIVERY_S * residual**2 / (4.0 * p.delta_f_max) / denom


def nadir_residual(H: float, dc: float, pfr: float, p: SystemParams) -> float:
    """Relative gap between the two sides of the nadir condition."""
    lhs = (H / p.f0 - dc * DC_DELIVERY_S / (4.0 * p.delta_f_max)) * pfr / PFR_DELIVERY_S
    rhs = max(p.p_infeed - dc, 0.0) ** 2 / (4.0 * p.delta_f_max)
    scale = max(abs(lhs), abs(rhs), 1e-300)
    return abs(lhs - rhs) / scale


def dc_price(H: float, p: SystemParams, eps: float = 1.0) -> float:
    """GBP/MW/h value of one more MW of DC, priced at displaced PFR."""
    saved = required_pfr(H, p.dc_volume - eps, p) - required_pfr(H, p.dc_volume, p)
    return max(p.pfr_price * saved / eps, 0.0)


def dc_price_derivative(H: float, p: SystemParams) -> float:
    """Analytic -dPFR/dDC times the PFR price, for cross-checking."""
    k = 4.0 * p.delta_f_max
    r = p.p_infeed - p.dc_volume
    g = H / p.f0 - p.dc_volume * DC_DELIVERY_S / k
    # PFR = 10 r^2 / (k g); dPFR/dDC = 10/k * (-2 r g + r^2 / k) / g^2
    dpfr = PFR_DELIVERY_S / k * (-2.0 * r * g + r * r * DC_DELIVERY_S / k) / (g * g)
    return max(-p.pfr_price * dpfr, 0.0)


def system_hours(profile: SystemProfile, p: SystemParams) -> list[SystemHour]:
    out = []
    for dem, wnd, sol in zip(profile.demand, profile.wind, profile.solar):
        H = system_inertia(float(dem), float(wnd), float(sol), p)
        out.append(SystemHour(float(dem), float(wnd), float(sol), net_demand(dem, wnd, sol), H,
                              required_pfr(H, p.dc_volume, p), dc_price(H, p)))
    return out


def build_price_series(
    profile: SystemProfile,
    p: SystemParams,
    scenario: ScenarioKind,
    constant_dc_price: float,
    buy: Sequence[float],
    sell: Sequence[float] | None = None,
    *,
    grid: TimeGrid | None = None,
) -> PriceSeries:
    """Assemble the vehicle-side price vectors for a scenario.

    ``profile`` and the energy prices must already be in grid order. Sell
    prices are forced to zero: the vehicles are not meant to arbitrage.
    """
    n = grid.step_count if grid is not None else 24
    buy = np.asarray(buy, dtype=float)
    if len(profile) != n:
        raise ValidationError(f"profile has {len(profile)} rows, expected {n}", "profile")
    if buy.shape != (n,):
        raise ValidationError(f"buy prices have {buy.size} entries, expected {n}", "buy")
    if sell is not None and len(sell) != n:
        raise ValidationError(f"sell prices have {len(sell)} entries, expected {n}", "sell")
    scenario = ScenarioKind.parse(scenario)
    if scenario is ScenarioKind.FUTURE_FR:
        fr = np.array([h.dc_price for h in system_hours(profile, p)]) / 1000.0
    elif scenario is ScenarioKind.CURRENT_FR:
        fr = np.full(n, constant_dc_price / 1000.0)
    else:
        fr = np.zeros(n)
    return PriceSeries(buy, np.zeros(n), fr)


# ---------------------------------------------------------------- CSV I/O

def _rows(path: Path, header: Sequence[str]) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [h for h in header if h not in (reader.fieldnames or [])]
        if missing:
            raise ValidationError(f"{path}: missing columns {missing}", "header")
        return list(reader)


def read_profile(path: str | Path) -> SystemProfile:
    rows = _rows(Path(path), PROFILE_HEADER)
    arr = {k: np.array([float(r[k]) for r in rows]) for k in PROFILE_HEADER}
    return SystemProfile(arr["hour"].astype(int), arr["demand_mw"], arr["wind_mw"], arr["solar_mw"])


def write_profile(profile: SystemProfile, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PROFILE_HEADER)
        for row in zip(profile.hours, profile.demand, profile.wind, profile.solar):
            w.writerow([int(row[0])] + [f"{v:.1f}" for v in row[1:]])


def read_energy_prices(path: str | Path, grid: TimeGrid) -> tuple[np.ndarray, np.ndarray]:
    """Buy and sell prices in grid order, keyed by the ``hour`` column."""
    rows = _rows(Path(path), ENERGY_HEADER)
    by_hour = {int(float(r["hour"])): r for r in rows}
    buy, sell = [], []
    for t in range(grid.step_count):
        h = int(grid.hour_of_day(t))
        if h not in by_hour:
            raise ValidationError(f"{path}: no price for hour {h}", "hour")
        buy.append(float(by_hour[h]["buy_gbp_per_kwh"]))
        sell.append(float(by_hour[h]["sell_gbp_per_kwh"]))
    return np.array(buy), np.array(sell)


def price_series_rows(prices: PriceSeries, grid: TimeGrid) -> Iterable[tuple]:
    for t in range(len(prices)):
        yield (int(grid.hour_of_day(t)), f"{prices.buy[t]:.6f}", f"{prices.sell[t]:.6f}",
               f"{prices.fr[t]:.6f}")


# ------------------------------------------------------- synthetic profiles

WIND_CAPACITY_MW = 45_000.0
SOLAR_CAPACITY_MW = 35_000.0


def _daylight(h: np.ndarray, noon: float, half_day: float) -> np.ndarray:
    x = (h - noon) / half_day
    return np.where(np.abs(x) < 1, np.cos(0.5 * np.pi * x), 0.0)


def synthetic_profile(season: str, extreme: bool = False) -> SystemProfile:
    """Illustrative hour-of-day profile for demos and tests.

    The shapes are smooth stand-ins: a morning/evening double-humped demand
    within 20-60 GW, a bell-shaped solar day and a wind output that is
    stronger in winter and at night. ``extreme`` gives a sunny low-demand
    summer day or a gale-force winter night.
    """
    h = np.arange(24, dtype=float)
    hump = np.exp(-((h - 9) / 3.0) ** 2) + 1.2 * np.exp(-((h - 18.5) / 2.5) ** 2)
    if season == "summer":
        demand = 21_000 + 12_000 * hump / hump.max()
        daylight = _daylight(h, 13.0, 8.0) ** 1.3
        solar = SOLAR_CAPACITY_MW * (0.95 if extreme else 0.55) * daylight
        wind = WIND_CAPACITY_MW * (0.25 + 0.08 * np.cos((h - 3) / 24 * 2 * np.pi))
        if extreme:
            demand = demand - 1_000
    elif season == "winter":
        demand = 36_000 + 23_000 * hump / hump.max()
        daylight = _daylight(h, 12.5, 5.0) ** 1.5
        solar = SOLAR_CAPACITY_MW * 0.12 * daylight
        wind = WIND_CAPACITY_MW * (0.55 + 0.15 * np.cos((h - 2) / 24 * 2 * np.pi))
        if extreme:
            wind = np.minimum(WIND_CAPACITY_MW * (0.95 + 0.05 * np.cos((h - 2) / 24 * 2 * np.pi)),
                              WIND_CAPACITY_MW)
    else:
        raise ValidationError(f"unknown season {season!r}; expected summer or winter", "season")
    return SystemProfile(h.astype(int), np.round(demand, 1), np.round(wind, 1),
                         np.round(solar, 1))
