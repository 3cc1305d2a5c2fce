"""CCGTs and CO2 displaced when a fleet supplies Dynamic Containment.

Starting from a system that meets the frequency-nadir condition exactly, the
fleet's DC is removed and we ask how many extra part-loaded CCGTs (each
bringing inertia and PFR) would be needed to restore the condition. That
count is what the fleet avoids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .frprices import (
    DC_DELIVERY_S, PFR_DELIVERY_S, SystemParams, SystemProfile, required_pfr, system_inertia,
)

BRACKET = (0.0, 200.0)
REL_TOL = 1e-12
EMISSIONS_HEADER = ("hour", "dc_ev_mw", "x_avoided")


class CalibrationError(ValueError):
    """The baseline does not bracket a root, so it was not calibrated."""


@dataclass(frozen=True)
class CcgtParams:
    capacity: float = 500.0
    inertia_constant: float = 5.0
    pfr_fraction: float = 0.15
    min_stable: float = 250.0
    emission_rate: float = 0.368  # kg CO2 per kWh

    @property
    def h_per_plant(self) -> float:
        return self.capacity * self.inertia_constant

    @property
    def pfr_per_plant(self) -> float:
        return self.pfr_fraction * self.capacity


@dataclass(frozen=True)
class Baseline:
    """System state that meets the nadir condition with equality."""

    inertia: float
    pfr: float
    dc: float


def calibrated_baseline(H: float, dc: float, p: SystemParams) -> Baseline:
    return Baseline(H, required_pfr(H, dc, p), dc)


def profile_baselines(profile: SystemProfile, p: SystemParams) -> list[Baseline]:
    out = []
    for dem, wnd, sol in zip(profile.demand, profile.wind, profile.solar):
        H = system_inertia(float(dem), float(wnd), float(sol), p)
        out.append(calibrated_baseline(H, p.dc_volume, p))
    return out


def _terms(base: Baseline, dc_ev: float, p: SystemParams, c: CcgtParams):
    k = 4.0 * p.delta_f_max
    dc = base.dc - dc_ev
    A = base.inertia / p.f0 - dc * DC_DELIVERY_S / k
    alpha = c.h_per_plant / p.f0
    R = max(p.p_infeed - dc, 0.0) ** 2 / k
    return A, alpha, R


def nadir_gap(x: float, base: Baseline, dc_ev: float, p: SystemParams, c: CcgtParams) -> float:
    """Left minus right side of the nadir condition with ``x`` extra CCGTs."""
    A, alpha, R = _terms(base, dc_ev, p, c)
    return (A + alpha * x) * (base.pfr + c.pfr_per_plant * x) / PFR_DELIVERY_S - R


def relative_residual(x: float, base: Baseline, dc_ev: float, p: SystemParams,
                      c: CcgtParams) -> float:
    _, _, R = _terms(base, dc_ev, p, c)
    return abs(nadir_gap(x, base, dc_ev, p, c)) / max(R, 1e-300)


def ccgts_avoided(base: Baseline, dc_ev: float, p: SystemParams, c: CcgtParams | None = None,
                  bracket: tuple[float, float] = BRACKET) -> float:
    """Plants' worth of CCGT made unnecessary by ``dc_ev`` MW of fleet DC."""
    c = c or CcgtParams()
    if dc_ev < 0 or dc_ev > base.dc:
        raise ValueError(f"dc_ev={dc_ev} MW outside [0, {base.dc}]")
    lo, hi = bracket
    f_lo = nadir_gap(lo, base, dc_ev, p, c)
    f_hi = nadir_gap(hi, base, dc_ev, p, c)
    _, _, R = _terms(base, dc_ev, p, c)
    scale = max(R, 1e-300)
    if abs(f_lo) <= REL_TOL * scale:
        return lo
    if f_lo > 0 or f_hi < 0:
        raise CalibrationError(
            f"baseline not calibrated: no sign change on [{lo}, {hi}] "
            f"(gap {f_lo:.6g} .. {f_hi:.6g})")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = nadir_gap(mid, base, dc_ev, p, c)
        if abs(f_mid) <= REL_TOL * scale or hi - lo <= 1e-15 * max(1.0, hi):
            return mid
        if f_mid < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def ccgts_avoided_quadratic(base: Baseline, dc_ev: float, p: SystemParams,
                            c: CcgtParams | None = None) -> float:
    """Closed-form positive root of the same condition (cross-check)."""
    c = c or CcgtParams()
    A, alpha, R = _terms(base, dc_ev, p, c)
    beta = c.pfr_per_plant
    qa = alpha * beta
    qb = alpha * base.pfr + A * beta
    qc = A * base.pfr - PFR_DELIVERY_S * R
    if qa == 0:
        return -qc / qb
    disc = qb * qb - 4 * qa * qc
    # numerically stable form of the larger root
    if qb >= 0:
        return (2 * -qc) / (qb + math.sqrt(disc))
    return (-qb + math.sqrt(disc)) / (2 * qa)


def co2_avoided(x_mean: float, hours: float, c: CcgtParams | None = None,
                energy_basis: float = 250.0) -> float:
    """kg CO2 for ``x_mean`` plants each running at ``energy_basis`` MW."""
    c = c or CcgtParams()
    if x_mean < 0:
        raise ValueError("x_mean must be non-negative")
    return x_mean * energy_basis * hours * c.emission_rate * 1000.0


def fleet_dc_mw(dc_kw_per_ev: Sequence[np.ndarray], scale_to: int | None = 5000) -> np.ndarray:
    """Hourly fleet DC in MW, optionally scaled to a larger identical fleet."""
    arr = np.asarray(dc_kw_per_ev, dtype=float)
    if arr.size == 0:
        raise ValueError("no vehicles")
    total = arr.sum(axis=0) / 1000.0
    if scale_to is not None:
        total *= scale_to / arr.shape[0]
    return total


def hourly_avoided(baselines: Sequence[Baseline], dc_ev_mw: Sequence[float], p: SystemParams,
                   c: CcgtParams | None = None) -> np.ndarray:
    if len(baselines) != len(dc_ev_mw):
        raise ValueError("baselines and dc_ev_mw differ in length")
    return np.array([ccgts_avoided(b, float(d), p, c) for b, d in zip(baselines, dc_ev_mw)])
