import csv
import io
import json

import numpy as np
import pytest

from fleetv2g.charging import reprice
from fleetv2g.config import from_dict, load_config
from fleetv2g.core import ScenarioKind, TripSpec, ValidationError
from fleetv2g.runner import (
    PER_EV_HEADER, delayed_trip, dumps, merge_reports, run_scenario, run_sensitivity_delay,
    run_sensitivity_price, write_atomic,
)

SMALL = {"fleet": {"n": 4}, "run": {"seed": 3}}


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    return run_scenario(from_dict(SMALL), out), out


@pytest.fixture(scope="module")
def delay_study():
    return run_sensitivity_delay(from_dict({"fleet": {"n": 3}, "run": {"seed": 3}}), [1, 2])


def test_run_writes_every_report(small_run):
    report, out = small_run
    assert not report.total_failure
    summary = json.loads((out / "summary.json").read_text())
    assert summary == json.loads(dumps(report.summary))
    assert set(summary["scenarios"]) == {"dumb", "smart", "current-fr", "future-fr"}
    rows = list(csv.reader(io.StringIO((out / "per_ev.csv").read_text())))
    assert tuple(rows[0]) == PER_EV_HEADER and len(rows) == 1 + 4 * 4
    for sc in ("smart", "future-fr"):
        assert len(list((out / "candidates" / sc).glob("candidates_*.csv"))) == 4
    assert (out / "emissions.csv").read_text().startswith("hour,dc_ev_mw,x_avoided\n")
    assert not list(out.rglob(".*.tmp"))


def test_aggregates_equal_sum_of_vehicles(small_run):
    report, _ = small_run
    for sc, outs in report.outcomes.items():
        body = report.summary["scenarios"][sc.value]
        for label, pick in (("original", lambda o: o.original),
                            ("optimal", lambda o: o.optimal.schedule)):
            for key, attr in (("revenue_fr_gbp", "revenue_fr"), ("cost_energy_gbp", "cost_energy"),
                              ("revenue_net_gbp", "revenue_net")):
                exact = sum(getattr(pick(o), attr) for o in outs)
                # the report rounds money to 4 dp; the sum itself is exact
                assert body[label][key] == round(exact, 4)
                assert abs(body[label][key] - exact) <= 5e-5 + 1e-6


def test_dumb_charging_earns_no_fr(small_run):
    report, _ = small_run
    for o in report.outcomes[ScenarioKind.DUMB]:
        assert o.original.revenue_fr == 0.0 and o.optimal.schedule.revenue_fr == 0.0


def test_scenario_cost_and_revenue_ordering(small_run):
    body = small_run[0].summary["scenarios"]
    for label in ("original", "optimal"):
        assert body["dumb"][label]["cost_energy_gbp"] >= body["smart"][label]["cost_energy_gbp"]
        assert (body["current-fr"][label]["revenue_net_gbp"]
                >= body["smart"][label]["revenue_net_gbp"])


@pytest.mark.xfail(strict=True, reason="start shifts still pay off through energy costs and "
                   "end-of-day energy on the synthetic fixtures; see the decisions ledger")
def test_constant_fr_prices_give_little_uplift(small_run):
    body = small_run[0].summary["scenarios"]["current-fr"]
    orig, opt = body["original"]["revenue_net_gbp"], body["optimal"]["revenue_net_gbp"]
    assert abs(opt - orig) <= 0.01 * abs(orig)


def test_delay_zero_is_the_baseline(delay_study):
    base = run_sensitivity_delay(from_dict({"fleet": {"n": 3}, "run": {"seed": 3}}), [])
    assert base["results"][0] == delay_study["results"][0]
    assert delay_study["results"][0]["reduction_gbp"] == 0.0


def test_longer_delays_never_help(delay_study):
    r = delay_study["results"]
    assert [x["delay_steps"] for x in r] == [0, 1, 2]
    assert all(x["vehicles_with_higher_revenue"] == 0 for x in r)
    assert 0.0 <= r[1]["reduction_gbp"] <= r[2]["reduction_gbp"]


def test_delayed_trip_slides_then_trims():
    trip = TripSpec(5, 6.0, 0, 10, 4)
    assert delayed_trip(trip, 0) == (trip, "")
    t, note = delayed_trip(trip, 2)
    assert (t.duration_steps, t.original_start_step) == (7, 3) and "moved 4 -> 3" in note
    t, note = delayed_trip(trip, 8)
    assert (t.duration_steps, t.original_start_step) == (10, 0)
    assert "trimmed" in note and t.violations() == []


def test_price_scaling_rescales_fixed_schedules(small_run):
    report, _ = small_run
    cfg = from_dict(SMALL)
    p1 = cfg.prices(ScenarioKind.FUTURE_FR)
    p75 = p1.with_fr(p1.fr * 0.75)
    for o in report.outcomes[ScenarioKind.FUTURE_FR]:
        s = o.optimal.schedule
        r = reprice(s, p75, cfg.ev, penalty_mode=cfg.penalty_mode, kappa=cfg.kappa)
        assert r.revenue_fr == pytest.approx(0.75 * s.revenue_fr, rel=1e-12)
        assert r.cost_energy == pytest.approx(s.cost_energy, rel=1e-12)


def test_price_sensitivity_report():
    cfg = from_dict({"fleet": {"n": 2}, "run": {"seed": 5}})
    rep = run_sensitivity_price(cfg, [1.0, 0.5])
    a, b = rep["results"]
    assert (a["scale"], b["scale"]) == (1.0, 0.5)
    assert b["optimal"]["revenue_fr_gbp"] < a["optimal"]["revenue_fr_gbp"]
    assert "uplift_net_pct" in a and rep["study"] == "price"


def test_merge_reports(small_run, tmp_path):
    _, out = small_run
    merged = merge_reports([out, out / "summary.json"])
    assert len(merged["runs"]) == 2 and len(merged["table"]) == 8
    assert merged["table"][0]["run"] == out.name


def test_write_atomic_replaces_whole_file(tmp_path):
    path = tmp_path / "sub" / "x.txt"
    write_atomic(path, "first\n")
    write_atomic(path, "second\n")
    assert path.read_text() == "second\n"
    assert [p.name for p in path.parent.iterdir()] == ["x.txt"]


def test_config_files_and_errors(tmp_path):
    toy = load_config("toy.toml")
    assert toy.grid.step_count == 2 and toy.scenarios == (ScenarioKind.CURRENT_FR,)
    assert load_config("demo.toml").fleet_size == 8
    with pytest.raises(ValidationError, match="unknown keys"):
        from_dict({"ev": {"colour": "red"}})
    with pytest.raises(ValidationError, match="unknown sections"):
        from_dict({"fleets": {}})
    with pytest.raises(ValidationError, match="gap"):
        from_dict({"run": {"gap": -1}})
    with pytest.raises(ValidationError, match="file not found"):
        load_config(tmp_path / "missing.toml")


def test_inline_prices_respect_scenario():
    cfg = load_config("toy.toml")
    assert np.all(cfg.prices(ScenarioKind.SMART).fr == 0)
    assert np.all(cfg.prices(ScenarioKind.CURRENT_FR).fr == 1.0)
