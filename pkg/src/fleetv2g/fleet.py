"""Driving-pattern model for commercial fleets and synthetic fleet sampling.

A day pattern ``x`` has one entry per grid step: ``-1`` while plugged in,
``0`` while away and the trip's energy (kWh) at the step the vehicle
returns. Returns across a fleet are described by a Gaussian
``f(t) = a exp(-(t - b)^2 / c^2)`` in clock hours; new vehicles are drawn by
sampling the peak height and centre of that curve.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np
from scipy.stats import truncnorm

from .core import TimeGrid, TripSpec, ValidationError

PLUGGED = -1.0
FLEET_CSV_HEADER = ("ev_id", "fleet_kind", "original_start_step", "duration_steps",
                    "travel_energy_kwh")


class FitError(RuntimeError):
    def __init__(self, message: str, last: "GaussianFit | None" = None):
        super().__init__(message)
        self.last = last


@dataclass(frozen=True)
class GaussianFit:
    a: float
    b: float
    c: float
    residual_std: float
    iterations: int = 0
    sse_history: tuple[float, ...] = ()

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self.a * np.exp(-((t - self.b) ** 2) / self.c**2)


@dataclass(frozen=True)
class FleetTemplate:
    """Summary statistics for one fleet in one season (hours, kWh)."""

    kind: str
    season: str
    start_mean: float
    return_mean: float
    duration_mean: float
    duration_min: float
    duration_max: float
    energy_mean: float
    window_hours: float

    @property
    def key(self) -> str:
        return f"{self.kind}-{self.season}"


TEMPLATES = {
    t.key: t for t in (
        FleetTemplate("maintenance", "summer", 8.0, 12.0, 6.5, 5.0, 8.0, 5.7, 22.0),
        FleetTemplate("maintenance", "winter", 8.0, 15.0, 7.5, 7.0, 8.0, 4.2, 22.0),
        FleetTemplate("delivery", "summer", 7.5, 13.5, 6.5, 0.5, 9.0, 7.7, 16.0),
        FleetTemplate("delivery", "winter", 10.5, 14.5, 5.0, 0.5, 6.0, 8.9, 16.0),
    )
}
FLEET_KINDS = ("maintenance", "delivery")
WINDOW_HOURS = {"maintenance": 22.0, "delivery": 16.0}


def template(kind: str, season: str) -> FleetTemplate:
    try:
        return TEMPLATES[f"{kind}-{season}"]
    except KeyError:
        raise ValidationError(f"no fleet template for kind={kind!r} season={season!r}",
                              "fleet") from None


# ------------------------------------------------------------------ fitting

def _jacobian(t: np.ndarray, a: float, b: float, c: float) -> tuple[np.ndarray, np.ndarray]:
    u = t - b
    g = np.exp(-(u * u) / (c * c))
    J = np.column_stack([g, a * g * 2 * u / c**2, a * g * 2 * u * u / c**3])
    return a * g, J


def fit_gaussian(
    samples: Iterable[tuple[float, float]],
    *,
    max_iter: int = 200,
    tol: float = 1e-12,
) -> GaussianFit:
    """Least-squares Gaussian through ``(t, value)`` samples.

    Damped Gauss-Newton: the damping starts at 1e-3, grows tenfold after a
    rejected step and shrinks tenfold after an accepted one.
    """
    pts = np.asarray(list(samples), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("samples must be (t, value) pairs")
    t, v = pts[:, 0], pts[:, 1]
    if np.unique(t).size < 3:
        raise ValueError("need at least three distinct t values")
    if np.ptp(v) == 0:
        raise ValueError("degenerate samples: all values are equal")

    # start from the tallest sample and its half-width at half maximum
    k = int(np.argmax(v))
    a, b = float(v[k]), float(t[k])
    above = t[v >= a / 2]
    hwhm = max((above.max() - above.min()) / 2, np.min(np.diff(np.unique(t))) / 2)
    c = hwhm / math.sqrt(math.log(2))
    if a <= 0:
        raise ValueError("degenerate samples: no positive peak")

    model, J = _jacobian(t, a, b, c)
    r = v - model
    sse = float(r @ r)
    history = [sse]
    lam = 1e-3
    it = 0
    for it in range(1, max_iter + 1):
        JtJ = J.T @ J
        g = J.T @ r
        step = None
        while lam < 1e16:
            Ad = JtJ + lam * np.diag(np.diag(JtJ) + 1e-300)
            try:
                step = np.linalg.solve(Ad, g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            na, nb, nc = a + step[0], b + step[1], c + step[2]
            if nc <= 0:
                lam *= 10
                continue
            m2, J2 = _jacobian(t, na, nb, nc)
            r2 = v - m2
            sse2 = float(r2 @ r2)
            if sse2 <= sse:
                a, b, c, J, r = na, nb, nc, J2, r2
                improvement = sse - sse2
                sse = sse2
                history.append(sse)
                lam = max(lam / 10, 1e-12)
                break
            lam *= 10
        else:
            step = None
        if step is None or lam >= 1e16:
            break  # no descent direction left: at a minimum to working precision
        if improvement <= tol * max(sse, 1e-300) or np.max(np.abs(step)) < 1e-13 * (1 + abs(b)):
            break
    else:
        raise FitError(f"no convergence in {max_iter} iterations",
                       GaussianFit(a, abs(b), abs(c), _rstd(sse, t.size), it, tuple(history)))
    return GaussianFit(a, b, abs(c), _rstd(sse, t.size), it, tuple(history))


def _rstd(sse: float, n: int) -> float:
    return math.sqrt(sse / max(n - 3, 1))


def observed_profile(tpl: FleetTemplate, vehicles: int = 11) -> list[tuple[float, float]]:
    """Stand-in for measured fleet data: mean returned energy per clock hour.

    A small lattice of vehicles, durations spread evenly across the template
    range and departures within an hour of the mean, each contributes its
    energy at the hour it returns. Measured data would replace this.
    """
    durations = np.linspace(tpl.duration_min, tpl.duration_max, vehicles)
    durations += tpl.duration_mean - durations.mean()
    starts = tpl.start_mean + np.linspace(-1.0, 1.0, 5)
    totals = np.zeros(24)
    for s0 in starts:
        for d in durations:
            totals[int(math.floor(s0 + d)) % 24] += tpl.energy_mean
    return [(float(h), float(x)) for h, x in enumerate(totals / (vehicles * starts.size))]


def template_fit(tpl: FleetTemplate) -> GaussianFit:
    return fit_gaussian(observed_profile(tpl))


# ----------------------------------------------------------------- patterns

@dataclass(frozen=True, eq=False)
class DrivingPattern:
    x: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.x, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "x", arr)

    def __eq__(self, other) -> bool:
        return isinstance(other, DrivingPattern) and np.array_equal(self.x, other.x)

    def violations(self) -> list[str]:
        away = np.flatnonzero(self.x != PLUGGED)
        if away.size == 0:
            return ["no trip found"]
        out = []
        if away[-1] - away[0] + 1 != away.size:
            out.append("trip steps are not contiguous")
        pos = np.flatnonzero(self.x > 0)
        if pos.size > 1:
            out.append("more than one energy entry")
        elif pos.size == 1 and pos[0] != away[-1]:
            out.append("energy entry is not at the return step")
        if np.any((self.x < 0) & (self.x != PLUGGED)):
            out.append("negative entries other than -1")
        return out


def make_pattern(steps: int, start: int, duration: int, energy: float) -> DrivingPattern:
    if start < 0 or duration < 1 or start + duration >= steps:
        raise ValidationError(f"trip [{start}, {start + duration}) plus return step does not fit "
                              f"{steps} steps", "start")
    x = np.full(steps, PLUGGED)
    x[start:start + duration] = 0.0
    x[start + duration] = energy
    return DrivingPattern(x)


def window_for(kind: str, grid: TimeGrid) -> tuple[int, int]:
    """Travel window as steps ``[start, end)``, both fleets opening at the grid start."""
    hours = WINDOW_HOURS.get(kind)
    if hours is None:
        raise ValidationError(f"unknown fleet kind {kind!r}", "fleet_kind")
    return grid.window_steps(hours)


def pattern_to_trip(pattern: DrivingPattern, window: tuple[int, int]) -> TripSpec:
    problems = pattern.violations()
    if problems:
        raise ValidationError("; ".join(problems), "pattern")
    x = pattern.x
    away = np.flatnonzero(x != PLUGGED)
    start = int(away[0])
    energy = float(x[away[-1]]) if x[away[-1]] > 0 else 0.0
    duration = away.size - (1 if energy > 0 else 0)
    if duration < 1:
        raise ValidationError("trip has no away steps", "pattern")
    lo, hi = window
    if start < lo or start + duration > hi:
        raise ValidationError(
            f"trip [{start}, {start + duration}) falls outside window [{lo}, {hi})", "window")
    return TripSpec(duration, energy, lo, hi, start)


def sample_patterns(
    fit: GaussianFit,
    tpl: FleetTemplate,
    n: int,
    seed: int | np.random.Generator,
    grid: TimeGrid | None = None,
) -> list[DrivingPattern]:
    """Draw ``n`` synthetic day patterns.

    Per vehicle: the curve centre ``b`` is drawn uniformly over the hours
    where the fitted curve exceeds 1% of its peak and fixes the return hour;
    the height ``a`` is drawn uniformly on ``[0, fit.a]`` and used as the
    quantile of a truncated normal for the travel energy. Durations are drawn
    uniformly inside the template range, shifted to the template mean and
    clipped. Trips are slid, never shortened, to stay inside the window.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    grid = grid or TimeGrid()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    lo, hi = window_for(tpl.kind, grid)
    hi = min(hi, grid.step_count - 1)  # leave room for the return entry
    half = fit.c * math.sqrt(math.log(100.0))
    mu, sd = tpl.energy_mean, 0.2 * tpl.energy_mean
    dist = truncnorm((0.0 - mu) / sd, np.inf, loc=mu, scale=sd)
    mid = (tpl.duration_min + tpl.duration_max) / 2
    out = []
    for _ in range(n):
        b = rng.uniform(fit.b - half, fit.b + half)
        a = rng.uniform(0.0, fit.a)
        dur_h = rng.uniform(tpl.duration_min, tpl.duration_max) + (tpl.duration_mean - mid)
        dur_h = min(max(dur_h, tpl.duration_min), tpl.duration_max)
        dur = max(int(round(dur_h / grid.step_hours)), 1)
        dur = min(dur, hi - lo)
        q = min(max(a / fit.a, 1e-12), 1 - 1e-12)
        energy = round(float(dist.ppf(q)), 3)
        ret = int(round(((b - grid.start_hour_of_day) % 24) / grid.step_hours))
        start = min(max(ret - dur, lo), hi - dur)
        out.append(make_pattern(grid.step_count, start, dur, energy))
    return out


# ---------------------------------------------------------------- fleet I/O

@dataclass(frozen=True)
class FleetEv:
    ev_id: str
    fleet_kind: str
    trip: TripSpec


def synthesize_fleet(kind: str, season: str, n: int, seed: int,
                     grid: TimeGrid | None = None) -> list[FleetEv]:
    grid = grid or TimeGrid()
    tpl = template(kind, season)
    pats = sample_patterns(template_fit(tpl), tpl, n, seed, grid)
    window = window_for(kind, grid)
    width = max(3, len(str(n)))
    return [FleetEv(f"{kind[0].upper()}{i:0{width}d}", kind, pattern_to_trip(p, window))
            for i, p in enumerate(pats)]


def write_fleet(fleet: Sequence[FleetEv], dest: str | Path | TextIO) -> None:
    """Write the fleet CSV to a path or an open text stream."""
    if isinstance(dest, (str, Path)):
        with open(dest, "w", newline="") as fh:
            write_fleet(fleet, fh)
        return
    w = csv.writer(dest, lineterminator="\n")
    w.writerow(FLEET_CSV_HEADER)
    for ev in fleet:
        w.writerow([ev.ev_id, ev.fleet_kind, ev.trip.original_start_step,
                    ev.trip.duration_steps, f"{ev.trip.travel_energy:.3f}"])


def read_fleet(path: str | Path, grid: TimeGrid | None = None) -> list[FleetEv]:
    grid = grid or TimeGrid()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [h for h in FLEET_CSV_HEADER if h not in (reader.fieldnames or [])]
        if missing:
            raise ValidationError(f"{path}: missing columns {missing}", "header")
        out = []
        for row in reader:
            lo, hi = window_for(row["fleet_kind"], grid)
            trip = TripSpec(int(row["duration_steps"]), float(row["travel_energy_kwh"]), lo, hi,
                            int(row["original_start_step"]))
            out.append(FleetEv(row["ev_id"], row["fleet_kind"], trip))
    return out
