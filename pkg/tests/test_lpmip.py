import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fleetv2g.lpmip import (
    LpModel, ModelError, NodeLimitError, Relation, Status, read_lp, solve_lp, solve_mip, write_lp,
)
from fleetv2g.lpmip.model import FEAS_TOL, INT_TOL, OBJ_TOL

from oracles import enumerate_mip, highs_lp, vertex_lp


def random_lp(rng, n_max=6, m_max=6, eq_frac=0.15) -> LpModel:
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    mdl = LpModel()
    for _ in range(n):
        lo = float(rng.choice([0.0, -1.0, 0.5]))
        mdl.add_var(lo, lo + float(rng.uniform(0.5, 4.0)), float(np.round(rng.normal(), 3)))
    for _ in range(m):
        coefs = {j: float(np.round(rng.normal(), 2)) for j in range(n) if rng.random() < 0.8}
        r = rng.random()
        rel = Relation.EQ if r < eq_frac else Relation.GE if r < 0.35 else Relation.LE
        mdl.add_row(coefs, rel, float(np.round(rng.uniform(-1, 3), 2)))
    return mdl


def random_mip(rng) -> LpModel:
    """Scheduling-shaped: continuous powers gated by binaries, a coupling budget."""
    nb = int(rng.integers(1, 7))
    nc = int(rng.integers(1, 7))
    mdl = LpModel()
    ys = [mdl.add_var(obj=float(np.round(rng.normal(0, 0.5), 3)), binary=True) for _ in range(nb)]
    xs = [mdl.add_var(0.0, float(rng.choice([2.0, 5.0, math.inf])),
                      float(np.round(rng.normal(), 3))) for _ in range(nc)]
    rows = 0
    for x in xs:
        if rows >= 8:
            break
        y = ys[int(rng.integers(nb))]
        mdl.add_row({x: 1.0, y: -float(rng.uniform(1, 5))}, "<=", 0.0)
        rows += 1
    while rows < int(rng.integers(2, 9)):
        coefs = {j: float(np.round(rng.uniform(-1, 2), 2)) for j in range(mdl.n)
                 if rng.random() < 0.6}
        rel = Relation.LE if rng.random() < 0.8 else Relation.GE
        mdl.add_row(coefs, rel, float(np.round(rng.uniform(0, 4), 2)))
        rows += 1
    return mdl


# ------------------------------------------------------------------- LP

def test_lp_trivial_examples():
    m = LpModel()
    m.add_var(0, 1, 0.0)
    assert solve_lp(m).objective == 0.0
    m = LpModel()
    x, y = m.add_var(obj=1.0), m.add_var(obj=1.0)
    m.add_row({x: 1}, "<=", 1)
    m.add_row({y: 1}, "<=", 2)
    sol = solve_lp(m)
    assert sol.status is Status.OPTIMAL and sol.objective == pytest.approx(3.0)
    assert sol.x == pytest.approx([1.0, 2.0])


def test_lp_infeasible_and_unbounded():
    m = LpModel()
    x = m.add_var(0, 1)
    m.add_row({x: 1}, ">=", 2)
    assert solve_lp(m).status is Status.INFEASIBLE
    m = LpModel()
    x, y = m.add_var(obj=1.0), m.add_var()
    m.add_row({x: 1, y: -1}, "<=", 1)
    assert solve_lp(m).status is Status.UNBOUNDED


def test_lp_matches_vertex_enumeration():
    rng = np.random.default_rng(2024)
    checked = 0
    for _ in range(100):
        mdl = random_lp(rng)
        ref_status, ref = vertex_lp(mdl)
        sol = solve_lp(mdl)
        assert sol.status.value == ref_status
        if ref_status == "optimal":
            checked += 1
            assert sol.objective == pytest.approx(ref, abs=1e-6)
            assert mdl.max_violation(sol.x) <= FEAS_TOL
    assert checked > 50


def test_lp_matches_highs_on_larger_models():
    rng = np.random.default_rng(99)
    for _ in range(60):
        mdl = random_lp(rng, n_max=25, m_max=20)
        A, b, rel = mdl.dense()
        status, ref, _ = highs_lp(A, b, rel, np.array(mdl.lb), np.array(mdl.ub),
                                  np.array(mdl.obj))
        sol = solve_lp(mdl)
        assert sol.status.value == status
        if status == "optimal":
            assert sol.objective == pytest.approx(ref, rel=1e-8, abs=1e-8)
            assert mdl.max_violation(sol.x) <= FEAS_TOL


def test_degenerate_lp_terminates():
    # Classic cycling example (Beale), maximisation form.
    m = LpModel()
    x = [m.add_var(obj=c) for c in (0.75, -150.0, 0.02, -6.0)]
    m.add_row(dict(zip(x, (0.25, -60.0, -0.04, 9.0))), "<=", 0.0)
    m.add_row(dict(zip(x, (0.5, -90.0, -0.02, 3.0))), "<=", 0.0)
    m.add_row({x[2]: 1.0}, "<=", 1.0)
    sol = solve_lp(m)
    assert sol.status is Status.OPTIMAL
    assert sol.objective == pytest.approx(0.05)


def test_validation_errors():
    m = LpModel()
    m.add_var(2, 1)
    with pytest.raises(ModelError):
        solve_lp(m)
    m = LpModel()
    m.add_var()
    m.add_row({3: 1.0}, "<=", 1)
    with pytest.raises(ModelError):
        solve_lp(m)
    m = LpModel()
    j = m.add_var(binary=True)
    m.ub[j] = 2.0
    with pytest.raises(ModelError):
        solve_mip(m)


# ------------------------------------------------------------------ MIP

def test_mip_small_examples():
    m = LpModel()
    y1, y2 = m.add_var(obj=5, binary=True), m.add_var(obj=4, binary=True)
    m.add_row({y1: 3, y2: 2}, "<=", 4)
    sol = solve_mip(m)
    assert sol.status is Status.OPTIMAL and sol.objective == pytest.approx(5.0)
    assert sol.x == pytest.approx([1.0, 0.0])


def test_mip_with_fixed_binaries_equals_lp():
    rng = np.random.default_rng(5)
    for _ in range(20):
        mdl = random_mip(rng)
        for j in mdl.binary_indices:
            v = float(rng.integers(2))
            mdl.set_bounds(j, v, v)
        lp, mip = solve_lp(mdl), solve_mip(mdl)
        assert lp.status is mip.status
        if lp.status is Status.OPTIMAL:
            assert mip.objective == pytest.approx(lp.objective, abs=1e-9)
            assert mip.node_count <= 1


def test_mip_matches_exhaustive_enumeration():
    rng = np.random.default_rng(77)
    optimal = 0
    for _ in range(100):
        mdl = random_mip(rng)
        status, ref = enumerate_mip(mdl)
        sol = solve_mip(mdl, gap=0.0)
        assert sol.status.value == status
        if status == "optimal":
            optimal += 1
            assert sol.objective == pytest.approx(ref, rel=1e-6, abs=1e-6)
            for j in mdl.binary_indices:
                assert abs(sol.x[j] - round(sol.x[j])) <= INT_TOL
            assert sol.achieved_gap <= 1e-9
    assert optimal > 60


def test_mip_respects_requested_gap():
    rng = np.random.default_rng(3)
    for _ in range(30):
        mdl = random_mip(rng)
        sol = solve_mip(mdl, gap=0.05)
        if sol.status is Status.OPTIMAL:
            assert sol.achieved_gap <= 0.05
            status, ref = enumerate_mip(mdl)
            assert sol.objective >= ref - 0.05 * max(abs(ref), 1.0) - 1e-9


def test_node_limit_carries_incumbent():
    # A knapsack that needs many nodes at gap 0.
    rng = np.random.default_rng(0)
    m = LpModel()
    w = rng.uniform(1, 10, 30)
    ys = [m.add_var(obj=float(w[i] + rng.uniform(0, 0.5)), binary=True) for i in range(30)]
    m.add_row(dict(zip(ys, w)), "<=", float(w.sum() / 2))
    with pytest.raises(NodeLimitError) as exc:
        solve_mip(m, gap=0.0, node_limit=3)
    inc = exc.value.incumbent
    assert inc is None or inc.status is Status.OPTIMAL


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_relaxation_bounds_mip(seed):
    mdl = random_mip(np.random.default_rng(seed))
    mip = solve_mip(mdl, gap=0.0)
    lp = solve_lp(mdl.relaxed())
    if mip.status is Status.OPTIMAL:
        assert lp.status is Status.OPTIMAL
        assert lp.objective >= mip.objective - OBJ_TOL * max(1.0, abs(mip.objective))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), alpha=st.sampled_from([0.5, 2.0, 4.0, 0.25]))
def test_objective_scaling_covariance(seed, alpha):
    mdl = random_mip(np.random.default_rng(seed))
    a, b = solve_mip(mdl, gap=0.0), solve_mip(mdl.scaled_objective(alpha), gap=0.0)
    assert a.status is b.status
    if a.status is Status.OPTIMAL:
        assert b.objective == pytest.approx(alpha * a.objective, rel=1e-9, abs=1e-12)
        assert np.array_equal(a.x, b.x)


def test_determinism_bit_identical():
    rng = np.random.default_rng(11)
    for _ in range(10):
        mdl = random_mip(rng)
        a, b = solve_mip(mdl), solve_mip(mdl.copy())
        assert a.status is b.status
        if a.status is Status.OPTIMAL:
            assert a.objective == b.objective
            assert a.x.tobytes() == b.x.tobytes()


# ------------------------------------------------------------ LP format

def test_lp_format_round_trip():
    rng = np.random.default_rng(8)
    for _ in range(10):
        mdl = random_mip(rng)
        mdl.add_var(-1.0, math.inf, 0.5, name="free_ish")
        text = write_lp(mdl)
        back = read_lp(io.StringIO(text))
        assert back.n == mdl.n and back.m == mdl.m
        assert back.lb == mdl.lb and back.ub == mdl.ub and back.obj == mdl.obj
        assert back.binary_indices == mdl.binary_indices
        for r0, r1 in zip(mdl.rows, back.rows):
            assert (r0.indices, r0.coefs, r0.relation, r0.rhs) == (
                r1.indices, r1.coefs, r1.relation, r1.rhs)
        assert write_lp(back) == text


def test_lp_format_text_shape(tmp_path):
    m = LpModel()
    x = m.add_var(0, 2, 1.0, name="x")
    y = m.add_var(obj=-1.0, name="y", binary=True)
    m.add_row({x: 1.0, y: 2.0}, "<=", 3.0, name="cap")
    path = tmp_path / "m.lp"
    write_lp(m, path)
    text = path.read_text()
    assert text.splitlines()[1] == "Maximize"
    assert "cap: + 1.0 x + 2.0 y <= 3.0" in text
    assert "Binaries" in text and text.rstrip().endswith("End")
    assert solve_lp(read_lp(path)).objective == pytest.approx(solve_lp(m).objective)
