import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from migplan import builders
from migplan.data_model import DerSpec
from migplan.instances import tiny_problem
from migplan.milp import (
    Status, available_backends, from_arrays, get_backend, set_default_backend, solve_lp,
    solve_mip, write_lp,
)

from oracles import enumerate_mip, tableau_lp

BACKENDS = ("internal", "external:highs")


def dual_objective(model, res):
    """Right-hand sides priced by row duals plus bounds priced by reduced costs."""
    return float(model.rhs @ res.duals + res.reduced_costs @ res.primal) + model.offset


def assert_strong_duality(model, res):
    assert res.status is Status.OPTIMAL
    primal = res.objective
    assert abs(primal - dual_objective(model, res)) <= 1e-6 * max(1.0, abs(primal))
    # stationarity: c = A^T y + d
    assert np.allclose(model.A.T @ res.duals + res.reduced_costs, model.objective, atol=1e-6)


@pytest.mark.parametrize("backend", BACKENDS)
def test_one_variable_lp(backend):
    m = from_arrays([1.0], [[1.0]], ">", [3.0], upper=[10.0])
    res = solve_lp(m, backend)
    assert res.objective == pytest.approx(3.0)
    assert res.duals[0] == pytest.approx(1.0)
    assert_strong_duality(m, res)


@pytest.mark.parametrize("backend", BACKENDS)
def test_degenerate_duplicate_rows(backend):
    A = [[1, 1], [1, 1], [1, 1], [1, 0]]
    m = from_arrays([2.0, 3.0], A, [">", ">", ">", "<"], [4, 4, 4, 10])
    res = solve_lp(m, backend)
    assert res.objective == pytest.approx(8.0)
    assert sum(res.duals[:3]) == pytest.approx(2.0)
    slack = m.row_activity(res.primal) - m.rhs
    assert np.all(np.abs(res.duals * slack) <= 1e-7)
    assert np.all(res.duals[:3] >= -1e-9)
    assert_strong_duality(m, res)


def random_lp(seed, m=20, n=30):
    rng = np.random.default_rng(seed)
    A = rng.uniform(-1, 1, size=(m, n))
    A[rng.random((m, n)) < 0.5] = 0.0
    x0 = rng.uniform(0, 2, n)
    sense = rng.choice(["<", ">", "="], size=m, p=[0.45, 0.45, 0.1])
    act = A @ x0
    rhs = np.where(sense == "<", act + rng.uniform(0, 1, m),
                   np.where(sense == ">", act - rng.uniform(0, 1, m), act))
    c = rng.uniform(-1, 1, n)
    return c, A, list(sense), rhs, np.zeros(n), np.full(n, 5.0)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("backend", BACKENDS)
def test_random_lp_matches_tableau(seed, backend):
    c, A, sense, rhs, lo, hi = random_lp(seed)
    status, want = tableau_lp(c, A, sense, rhs, lo, hi)
    assert status == "optimal"
    m = from_arrays(c, A, sense, rhs, lo, hi)
    res = solve_lp(m, backend)
    assert res.objective == pytest.approx(want, abs=1e-6)
    assert_strong_duality(m, res)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 8), st.integers(1, 8))
def test_strong_duality_property(seed, m, n):
    c, A, sense, rhs, lo, hi = random_lp(seed, m, n)
    model = from_arrays(c, A, sense, rhs, lo, hi)
    for backend in BACKENDS:
        assert_strong_duality(model, solve_lp(model, backend))


@pytest.mark.parametrize("backend", BACKENDS)
def test_knapsack(backend):
    m = from_arrays([3.0, 2.0], [[1, 1]], "<", [1], upper=[1, 1], integer=[True, True],
                    maximize=True)
    res = solve_mip(m, backend=backend)
    assert res.objective == 3.0
    assert list(res.primal) == [1.0, 0.0]
    assert res.gap <= 1e-6


@pytest.mark.parametrize("backend", BACKENDS)
def test_infeasible_bounds_reported(backend):
    m = from_arrays([1.0], [[1.0], [1.0]], [">", "<"], [2.0, 1.0])
    assert solve_lp(m, backend).status is Status.INFEASIBLE
    mi = from_arrays([1.0], [[1.0], [1.0]], [">", "<"], [2.0, 1.0], integer=[True])
    assert solve_mip(mi, backend=backend).status is Status.INFEASIBLE


@pytest.mark.parametrize("backend", BACKENDS)
def test_unbounded_reported(backend):
    m = from_arrays([-1.0], [[1.0]], ">", [0.0])
    assert solve_lp(m, backend).status is Status.UNBOUNDED


def test_lp_rejects_integer_model():
    m = from_arrays([1.0], [[1.0]], ">", [0.5], integer=[True])
    with pytest.raises(ValueError):
        solve_lp(m)


def two_der_problem():
    wt = DerSpec("WT", "RES", 60, 2, capital_cost=1100, om_rate=40, resource="wind")
    de = DerSpec("DE", "DFG", 50, 4, capital_cost=300, om_rate=30, min_output=10,
                 fuel_cost=0.25, ramp_up=150, ramp_down=150)
    return tiny_problem(0).with_overrides(catalog=(wt, de))


@pytest.mark.parametrize("backend", BACKENDS)
def test_planning_mip_matches_enumeration(backend):
    from migplan.scenarios import nominal_scenarios
    from migplan.instances import tiny_profile

    p = two_der_problem()
    assert (p.years, p.typical_days, p.hours, len(p.catalog)) == (2, 1, 4, 2)
    nominal = nominal_scenarios(tiny_profile(p), p)[0]
    built = builders.build_deterministic(p, p.demand_forecast, nominal)
    m = built.model
    assert set(np.flatnonzero(m.integer)) == set(built.x_cols.ravel())
    status, want = enumerate_mip(m.objective, m.A.toarray(), m.sense, m.rhs, m.lower, m.upper,
                                 m.integer)
    assert status == "optimal"
    res = solve_mip(m, gap_tol=1e-9, backend=backend)
    assert res.objective == pytest.approx(want + m.offset, rel=1e-8)


def random_mip(seed, n=6):
    rng = np.random.default_rng(seed)
    c = -rng.uniform(1, 10, n)
    A = rng.uniform(1, 6, size=(3, n))
    return from_arrays(c, A, "<", A.sum(axis=1) * 0.4, upper=np.full(n, 3.0),
                       integer=np.ones(n, bool))


@pytest.mark.parametrize("seed", range(6))
def test_incumbent_log_monotone(seed):
    res = solve_mip(random_mip(seed), gap_tol=0.0, backend="internal")
    log = res.incumbent_log
    assert log, "expected at least one incumbent"
    assert all(b <= a for a, b in zip(log, log[1:]))
    assert log[-1] == pytest.approx(res.objective)


def test_internal_is_deterministic():
    m = random_mip(3)
    a = solve_mip(m, gap_tol=0.0, backend="internal")
    b = solve_mip(m, gap_tol=0.0, backend="internal")
    assert a.primal.tobytes() == b.primal.tobytes()
    assert a.incumbent_log == b.incumbent_log and a.nodes == b.nodes


def test_time_limit_returns_limit_status():
    m = random_mip(4, n=14)
    res = solve_mip(m, gap_tol=0.0, time_limit=0.0, backend="internal")
    assert res.status is Status.LIMIT
    assert math.isfinite(res.bound)


def test_mip_gap_definition():
    res = solve_mip(random_mip(5), gap_tol=1e-6, backend="external:highs")
    assert res.status is Status.OPTIMAL
    assert res.gap == pytest.approx(abs(res.objective - res.bound) / max(1, abs(res.objective)))
    assert res.gap <= 1e-6


def test_backend_registry(monkeypatch):
    assert {"internal", "external:highs"} <= set(available_backends())
    with pytest.raises(ValueError):
        get_backend("external:nope")
    monkeypatch.setenv("MIGPLAN_SOLVER_BACKEND", "internal")
    assert get_backend().name == "internal"
    set_default_backend("highs")
    try:
        assert get_backend().name != "internal"
    finally:
        set_default_backend(None)


def test_write_lp(tmp_path):
    m = from_arrays([1.0, 2.0], [[1, 1]], ">", [1], integer=[False, True])
    path = tmp_path / "m.lp"
    write_lp(m, path)
    text = path.read_text()
    assert text.startswith("\\ model") and "Subject To" in text and "General" in text
    assert text.rstrip().endswith("End")
