"""Domain types shared by the scheduling, pricing and fleet modules.

Energies are kWh, powers kW, energy prices GBP/kWh and availability prices
GBP/kW/h. Every type is immutable once built; array fields are stored as
read-only numpy arrays so they can be shared between worker processes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from typing import Sequence

import numpy as np


class ValidationError(ValueError):
    """Input that breaks a documented invariant.

    ``field`` names the offending attribute so callers can report it.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeGrid:
    step_count: int = 24
    step_hours: float = 1.0
    start_hour_of_day: int = 7

    @property
    def horizon_hours(self) -> float:
        return self.step_count * self.step_hours

    def hour_of_day(self, step: int) -> float:
        return (self.start_hour_of_day + step * self.step_hours) % 24

    def window_steps(self, window_hours: float, start_step: int = 0) -> tuple[int, int]:
        """Travel window of ``window_hours`` as away steps ``[start, end)``.

        Window lengths count clock hours from the opening hour to the closing
        hour inclusive, so a 15 h window opening at 7am lets the vehicle be
        away from 7am until it returns at 9pm (14 elapsed hours).
        """
        away = int(round((window_hours - 1.0) / self.step_hours))
        if away < 1:
            raise ValidationError(f"window of {window_hours} h leaves no travel time",
                                  "window_hours")
        return start_step, min(start_step + away, self.step_count)

    def violations(self, require_full_day: bool = False) -> list[str]:
        out = []
        if self.step_count < 2:
            out.append(f"step_count must be at least 2 (step_count={self.step_count})")
        if not self.step_hours > 0:
            out.append(f"step_hours must be positive (step_hours={self.step_hours})")
        if not 0 <= self.start_hour_of_day <= 23:
            out.append(f"start_hour_of_day outside [0, 23] "
                       f"(start_hour_of_day={self.start_hour_of_day})")
        if require_full_day and not math.isclose(self.horizon_hours, 24.0):
            out.append(f"horizon must span 24 h (step_count x step_hours = {self.horizon_hours})")
        return out


@dataclass(frozen=True)
class EvParams:
    """Battery and charger limits for one vehicle.

    The defaults describe a generic 40 kWh van on a 10 kW bidirectional
    charger. They are placeholders chosen for the demos, not measured values.
    ``e_end_min`` defaults to ``e_start`` so that consecutive days chain.
    """

    e_min: float = 4.0
    e_max: float = 40.0
    p_max: float = 10.0
    eta_c: float = 0.9
    eta_d: float = 0.9
    e_start: float = 20.0
    e_req: float = 38.0
    e_end_min: float | None = None
    t_sustain: float = 0.5
    delta_penalty: float = 0.5

    def __post_init__(self) -> None:
        if self.e_end_min is None:
            object.__setattr__(self, "e_end_min", self.e_start)

    @classmethod
    def from_capacity(cls, e_max: float, **overrides) -> "EvParams":
        """Defaults scaled to a battery size: 10% floor, 50% start, 95% target."""
        base = dict(e_min=0.1 * e_max, e_max=e_max, e_start=0.5 * e_max, e_req=0.95 * e_max)
        base.update(overrides)
        return cls(**base)

    def violations(self) -> list[str]:
        v = []

        def need(ok: bool, text: str, *names: str) -> None:
            if not ok:
                vals = ", ".join(f"{n}={getattr(self, n)}" for n in names)
                v.append(f"{text} ({vals})")

        for f in fields(self):
            val = getattr(self, f.name)
            if not isinstance(val, (int, float)) or not math.isfinite(val):
                v.append(f"{f.name} must be a finite number ({f.name}={val})")
        if v:
            return v
        need(self.e_min >= 0, "e_min is negative", "e_min")
        need(self.e_min <= self.e_start, "e_start is below e_min", "e_start", "e_min")
        need(self.e_start <= self.e_max, "e_start exceeds e_max", "e_start", "e_max")
        need(self.e_min <= self.e_req, "e_req is below e_min", "e_req", "e_min")
        need(self.e_req <= self.e_max, "e_req exceeds e_max", "e_req", "e_max")
        need(self.e_min <= self.e_end_min, "e_end_min is below e_min", "e_end_min", "e_min")
        need(self.e_end_min <= self.e_max, "e_end_min exceeds e_max", "e_end_min", "e_max")
        need(self.p_max > 0, "p_max must be positive", "p_max")
        need(0 < self.eta_c <= 1, "eta_c outside (0, 1]", "eta_c")
        need(0 < self.eta_d <= 1, "eta_d outside (0, 1]", "eta_d")
        need(0 < self.t_sustain <= 24, "t_sustain outside (0, 24]", "t_sustain")
        need(self.delta_penalty >= 0, "delta_penalty is negative", "delta_penalty")
        return v


@dataclass(frozen=True)
class TripSpec:
    """A single out-and-back journey. ``window_end_step`` is exclusive."""

    duration_steps: int
    travel_energy: float
    window_start_step: int
    window_end_step: int
    original_start_step: int

    def with_duration(self, duration_steps: int) -> "TripSpec":
        return replace(self, duration_steps=duration_steps)

    def violations(self, ev: EvParams | None = None, grid: TimeGrid | None = None) -> list[str]:
        v = []
        if self.duration_steps < 1:
            v.append(f"duration_steps must be at least 1 (duration_steps={self.duration_steps})")
        if self.travel_energy < 0:
            v.append(f"travel_energy is negative (travel_energy={self.travel_energy})")
        if self.window_start_step < 0:
            v.append(f"window_start_step is negative (window_start_step={self.window_start_step})")
        if self.window_start_step > self.original_start_step:
            v.append(f"original_start_step precedes window_start_step "
                     f"(original_start_step={self.original_start_step}, "
                     f"window_start_step={self.window_start_step})")
        if self.original_start_step + self.duration_steps > self.window_end_step:
            v.append(f"trip overruns window_end_step (original_start_step="
                     f"{self.original_start_step}, duration_steps={self.duration_steps}, "
                     f"window_end_step={self.window_end_step})")
        if grid is not None and self.window_end_step > grid.step_count:
            v.append(f"window_end_step exceeds step_count (window_end_step="
                     f"{self.window_end_step}, step_count={grid.step_count})")
        if ev is not None and self.travel_energy > ev.e_req - ev.e_min + 1e-12:
            v.append(f"trip infeasible: travel_energy exceeds e_req - e_min "
                     f"(travel_energy={self.travel_energy}, e_req={ev.e_req}, e_min={ev.e_min})")
        return v


@dataclass(frozen=True, eq=False)
class PriceSeries:
    buy: np.ndarray
    sell: np.ndarray
    fr: np.ndarray

    def __post_init__(self) -> None:
        for name in ("buy", "sell", "fr"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name)))

    @classmethod
    def constant(cls, n: int, buy: float = 0.0, sell: float = 0.0, fr: float = 0.0) -> "PriceSeries":
        return cls(np.full(n, buy), np.full(n, sell), np.full(n, fr))

    def __len__(self) -> int:
        return len(self.buy)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PriceSeries):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in ("buy", "sell", "fr"))

    def scaled(self, alpha: float) -> "PriceSeries":
        return PriceSeries(self.buy * alpha, self.sell * alpha, self.fr * alpha)

    def with_fr(self, fr: Sequence[float] | np.ndarray) -> "PriceSeries":
        return PriceSeries(self.buy, self.sell, fr)

    def violations(self, grid: TimeGrid | None = None) -> list[str]:
        v = []
        lengths = {k: len(getattr(self, k)) for k in ("buy", "sell", "fr")}
        if len(set(lengths.values())) != 1:
            v.append(f"price vectors differ in length ({lengths})")
        if grid is not None:
            for k, n in lengths.items():
                if n != grid.step_count:
                    v.append(f"{k} length does not match step_count ({k}={n}, "
                             f"step_count={grid.step_count})")
        for k in ("buy", "sell", "fr"):
            if not np.all(np.isfinite(getattr(self, k))):
                v.append(f"{k} contains non-finite values")
        if np.any(self.fr < 0):
            v.append(f"fr has negative entries (min fr={float(np.min(self.fr))})")
        return v


class ScenarioKind(str, Enum):
    DUMB = "dumb"
    SMART = "smart"
    CURRENT_FR = "current-fr"
    FUTURE_FR = "future-fr"

    @property
    def v2g_enabled(self) -> bool:
        return self in (ScenarioKind.CURRENT_FR, ScenarioKind.FUTURE_FR)

    @property
    def fr_enabled(self) -> bool:
        return self.v2g_enabled

    @classmethod
    def parse(cls, text: "str | ScenarioKind") -> "ScenarioKind":
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower().replace("_", "-")
        aliases = {"dumbcharging": "dumb", "smartcharging": "smart",
                   "currentfr": "current-fr", "futurefr": "future-fr"}
        key = aliases.get(key.replace("-", ""), key)
        try:
            return cls(key)
        except ValueError:
            choices = ", ".join(k.value for k in cls)
            raise ValidationError(f"unknown scenario {text!r}; expected one of {choices}",
                                  "scenario") from None


@dataclass(frozen=True, eq=False)
class Schedule:
    """Per-step decisions for one EV-day plus its money breakdown.

    ``energy[t]`` is the battery level at the end of step ``t``.
    ``revenue_net`` excludes the cycling penalty, which is reported apart.
    """

    c: np.ndarray
    d: np.ndarray
    bsup_c: np.ndarray
    bsup_d: np.ndarray
    energy: np.ndarray
    connected: np.ndarray
    revenue_fr: float
    cost_energy: float
    revenue_net: float
    step_hours: float = 1.0
    revenue_sell: float = 0.0
    penalty: float = 0.0
    start_step: int | None = None
    status: str = "optimal"
    notes: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        for name in ("c", "d", "bsup_c", "bsup_d", "energy"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name)))
        object.__setattr__(self, "connected", _frozen_array(self.connected, bool))

    @property
    def steps(self) -> int:
        return len(self.c)

    @property
    def discharged_kwh(self) -> float:
        return float(np.sum(self.d) * self.step_hours)

    @property
    def charged_kwh(self) -> float:
        return float(np.sum(self.c) * self.step_hours)

    @property
    def dc_kw(self) -> np.ndarray:
        """Upward availability per step, the quantity sold as frequency response."""
        return self.bsup_c + self.bsup_d

    def violations(self, ev: EvParams, tol: float = 1e-6) -> list[str]:
        v = []
        for name in ("c", "d", "bsup_c", "bsup_d"):
            arr = getattr(self, name)
            if np.any(arr < -tol):
                v.append(f"{name} has negative entries")
            if np.any(np.abs(arr[~self.connected]) > tol):
                v.append(f"{name} nonzero while disconnected")
        if np.any(np.minimum(self.c, self.d) > tol):
            v.append("simultaneous charge and discharge")
        if np.any(self.energy < ev.e_min - tol) or np.any(self.energy > ev.e_max + tol):
            v.append("energy outside [e_min, e_max]")
        return v

    def csv_rows(self) -> list[tuple]:
        return [
            (t, int(self.connected[t]), self.c[t], self.d[t], self.bsup_c[t],
             self.bsup_d[t], self.energy[t])
            for t in range(self.steps)
        ]

    def to_dict(self) -> dict:
        r4 = lambda x: round(float(x), 4)  # noqa: E731
        r3 = lambda arr: [round(float(x), 3) for x in arr]  # noqa: E731
        return {
            "start_step": self.start_step,
            "status": self.status,
            "revenue_fr_gbp": r4(self.revenue_fr),
            "cost_energy_gbp": r4(self.cost_energy),
            "revenue_sell_gbp": r4(self.revenue_sell),
            "penalty_gbp": r4(self.penalty),
            "revenue_net_gbp": r4(self.revenue_net),
            "connected": [bool(x) for x in self.connected],
            "c_kw": r3(self.c),
            "d_kw": r3(self.d),
            "bsup_c_kw": r3(self.bsup_c),
            "bsup_d_kw": r3(self.bsup_d),
            "e_kwh": r3(self.energy),
        }


SCHEDULE_CSV_HEADER = ("step", "connected", "c_kw", "d_kw", "bsup_c_kw", "bsup_d_kw", "e_kwh")


def derive_grid_mask(grid: TimeGrid, trip: TripSpec, start_step: int) -> np.ndarray:
    """Connection mask for a trip leaving at ``start_step``.

    The vehicle is plugged in everywhere except the ``duration_steps`` steps
    beginning at ``start_step``.
    """
    if not isinstance(start_step, (int, np.integer)) or start_step < 0:
        raise ValidationError(f"start_step must be a non-negative integer, got {start_step!r}",
                              "start_step")
    if trip.duration_steps < 1:
        raise ValidationError(f"duration_steps must be at least 1, got {trip.duration_steps}",
                              "duration_steps")
    if start_step + trip.duration_steps > grid.step_count:
        raise ValidationError(
            f"start_step + duration_steps = {start_step + trip.duration_steps} exceeds "
            f"step_count = {grid.step_count}", "start_step")
    mask = np.ones(grid.step_count, dtype=bool)
    mask[start_step:start_step + trip.duration_steps] = False
    return mask


def validate(ev: EvParams, trip: TripSpec | None, prices: PriceSeries, grid: TimeGrid) -> list[str]:
    """Every broken invariant across the inputs of one EV-day; empty means ok."""
    out = grid.violations() + ev.violations()
    if trip is not None:
        out += trip.violations(ev if not ev.violations() else None, grid)
    out += prices.violations(grid)
    return out
