import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from migplan import builders
from migplan.benders import solve_sp1
from migplan.data_model import DerSpec, InvestmentPlan, ValidationError
from migplan.instances import tiny_problem
from migplan.milp import Status, solve_lp, solve_mip
from migplan.scenarios import Scenario, ScenarioSet

from conftest import investment_probes, tiny_case
from oracles import tableau_lp


def flat_scenario(problem, load=1.0, availability=0.0):
    shape = (problem.years, problem.typical_days, problem.hours)
    return Scenario(1, 1.0, {r: np.full(shape, availability) for r in problem.resources},
                    np.full(shape, load))


def test_deterministic_structure_counts():
    p, _, nominal, _ = tiny_case(0)
    m = builders.build_deterministic(p, p.demand_forecast, nominal).model
    # WT, DE, ES over T=2, D=1, H=4 with two periods: 8 cells
    # columns: X 3x2, WT and DE output 2x8, ES charge/discharge/energy 3x8, curtailment 8, E0 2
    assert m.n_vars == 6 + 16 + 24 + 8 + 2
    # rows: monotone 3, three yearly adequacy families 3x2, per-cell families 12x8, ES day rows 3x2
    assert m.n_rows == 3 + 6 + 12 * 8 + 3 * 2
    counts = m.family_counts()
    assert counts["power-balance"] == 8 and counts["ess-cyclic"] == 2
    assert m.n_vars == p.n_ders * p.n_periods + builders.operational_column_count(p)
    assert m.n_rows == builders.investment_row_count(p) + builders.operational_row_count(p)


def test_zero_demand_costs_nothing():
    p = tiny_problem(0).with_overrides(dfg_min_ratio=0.0)
    p = p.with_overrides(long_term_reserve=np.zeros(p.years),
                         short_term_reserve=np.zeros_like(p.short_term_reserve))
    built = builders.build_deterministic(p, np.zeros(p.years), flat_scenario(p, availability=0.5))
    res = solve_mip(built.model, gap_tol=1e-9)
    assert res.objective == pytest.approx(0.0, abs=1e-9)
    assert np.all(built.plan(p, res.primal).units == 0)


def test_single_generator_hand_calculation():
    de = DerSpec("DE", "DFG", 60, 3, capital_cost=300, om_rate=30, min_output=10,
                 fuel_cost=0.25, ramp_up=60, ramp_down=60)
    p = tiny_problem(3).with_overrides(
        catalog=(de,), hours=2, periods=((1, 1),), demand_forecast=np.array([50.0]),
        long_term_reserve=np.zeros(1), short_term_reserve=np.zeros((1, 1, 2)), dfg_min_ratio=0.0)
    res = solve_mip(builders.build_deterministic(p, p.demand_forecast, flat_scenario(p)).model,
                    gap_tol=1e-12)
    # one unit covers 50 kW; it runs flat out for both hours of the day
    capital, om = 300 * 60, 30 * 60
    fuel = 0.25 * 50 * 2 * 365
    assert res.objective == pytest.approx((capital + om + fuel) / 1.04, rel=1e-9)


def no_reserves(problem):
    return problem.with_overrides(short_term_reserve=np.zeros_like(problem.short_term_reserve))


def test_all_curtailed_closed_form():
    # with no generator there is nobody to hold short-term reserve
    p = no_reserves(tiny_problem(0))
    plan = InvestmentPlan.from_periods(p, np.zeros((p.n_ders, p.n_periods)))
    scen = flat_scenario(p, load=0.7, availability=0.0)
    alpha = 0.25
    res = solve_lp(builders.build_dispatch_lp(p, plan, scen, alpha).model)
    tau = 1.04 ** -np.arange(1, p.years + 1)
    energy = (1 + alpha) * p.demand_forecast * 0.7 * p.hours
    want = p.curtailment_penalty * 365 * float(np.sum(tau * energy))
    assert res.objective == pytest.approx(want, rel=1e-9)


def test_zero_load_dispatch_is_free():
    p = no_reserves(tiny_problem(1))
    plan = InvestmentPlan.from_periods(p, np.zeros((p.n_ders, p.n_periods)))
    built = builders.build_dispatch_lp(p, plan, flat_scenario(p, load=0.0), 0.3)
    res = solve_lp(built.model)
    assert res.objective == pytest.approx(0.0, abs=1e-9)
    params = set(np.ravel(built.x_cols)) | {built.alpha_col}
    dispatch = [j for j in range(len(res.primal)) if j not in params]
    assert np.allclose(res.primal[dispatch], 0.0, atol=1e-9)


@pytest.mark.parametrize("variant", [0, 2, 5])
def test_dispatch_matches_tableau(variant):
    p, scen, _, _ = tiny_case(variant)
    alpha, units = investment_probes(p, np.random.default_rng(variant), 1)[0]
    m = builders.build_dispatch_lp(p, InvestmentPlan.from_periods(p, units), scen[0], alpha).model
    status, want = tableau_lp(m.objective, m.A.toarray(), m.sense, m.rhs, m.lower, m.upper)
    assert status == "optimal"
    assert solve_lp(m).objective == pytest.approx(want + m.offset, rel=1e-7, abs=1e-6)


def _larger_plan_costs(p, scen, seed, kinds):
    rng = np.random.default_rng(seed)
    alpha, small = investment_probes(p, rng, 1)[0]
    big = small.copy()
    choices = [k for k, d in enumerate(p.catalog) if d.kind.value in kinds]
    k = choices[rng.integers(len(choices))]
    big[k, -1] = min(big[k, -1] + 1, p.period_unit_bounds()[k, -1])
    n = int(rng.integers(len(scen)))
    return solve_sp1(p, small, alpha, scen[n]).cost, solve_sp1(p, big, alpha, scen[n]).cost


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 5), st.integers(0, 10_000))
def test_dispatch_nonincreasing_in_capacity(variant, seed):
    p, scen, _, _ = tiny_case(variant)
    # generators keep a must-run floor, so only zero-floor units are covered
    zero_floor = tuple(replace(d, min_output=0.0) for d in p.catalog)
    q = p.with_overrides(catalog=zero_floor)
    lo, hi = _larger_plan_costs(q, scen, seed, ("RES", "ESS", "DFG"))
    assert hi <= lo + 1e-6 * max(1.0, lo)


def test_extra_generator_can_raise_dispatch_cost():
    # each installed generator runs at least at its minimum output
    p, scen, _, _ = tiny_case(0)
    lo, hi = _larger_plan_costs(p, scen, 0, ("DFG",))
    assert hi > lo


def test_penalty_scaling_keeps_solution_feasible():
    p, _, nominal, _ = tiny_case(1)
    base = builders.build_deterministic(p, p.demand_forecast, nominal).model
    res = solve_mip(base, gap_tol=1e-9)
    for factor in (1.5, 4.0):
        q = p.with_overrides(curtailment_penalty=p.curtailment_penalty * factor)
        scaled = builders.build_deterministic(q, q.demand_forecast, nominal).model
        assert scaled.max_violation(res.primal) <= 1e-7
        assert scaled.evaluate(res.primal) >= res.objective - 1e-9
        assert solve_mip(scaled, gap_tol=1e-9).objective >= res.objective - 1e-6


def test_igd_rejects_nonpositive_budget():
    p, _, nominal, _ = tiny_case(0)
    with pytest.raises(ValidationError):
        builders.build_igd(p, 0.0, nominal)
    with pytest.raises(ValidationError):
        builders.build_ccigd_monolithic(p, tiny_case(0)[1], -1.0)


def test_igd_zero_deviation_is_feasible():
    p, _, nominal, lam = tiny_case(2)
    q = p.with_overrides(deviation_factor=0.0)
    res = solve_mip(builders.build_igd(q, lam, nominal).model, gap_tol=1e-9)
    assert res.status is Status.OPTIMAL
    assert res.objective >= 0.0


def test_igd_budget_row_present():
    p, _, nominal, lam = tiny_case(0)
    m = builders.build_igd(p, lam, nominal).model
    assert m.family_counts()["budget"] == 1
    assert m.rhs[m.rows_in("budget")[0]] == pytest.approx((1 + p.deviation_factor) * lam)
    assert m.maximize


def test_monolithic_rejects_bad_big_m():
    p, scen, _, lam = tiny_case(0)
    with pytest.raises(ValidationError):
        builders.build_ccigd_monolithic(p, scen, lam, big_m={"budget": [0.0] * len(scen)})
    with pytest.raises(ValueError):
        builders.build_ccigd_monolithic(p, scen, lam, linearization="exact")


@pytest.mark.parametrize("variant", range(6))
def test_zero_tolerance_intersection(variant):
    p, scen, _, lam = tiny_case(variant, count=3)
    p0 = p.with_overrides(risk_tolerance=0.0)
    res = solve_mip(builders.build_ccigd_monolithic(p0, scen, lam).model, gap_tol=1e-9)
    singles = [solve_mip(builders.build_ccigd_restricted(p0, [scen[n]], lam).model,
                         gap_tol=1e-9).objective for n in range(len(scen))]
    # one plan must serve every scenario, so no single scenario can do worse
    assert res.objective <= min(singles) + 1e-7
    # on these instances the hardest scenario's plan also serves the rest
    assert res.objective == pytest.approx(min(singles), abs=1e-6)


@pytest.mark.parametrize("linearization", ["bigm", "mccormick"])
@pytest.mark.parametrize("variant", [0, 4])
def test_monolithic_equals_pattern_enumeration(variant, linearization):
    p, scen, _, lam = tiny_case(variant, count=3)
    p = p.with_overrides(risk_tolerance=0.34)
    scen = scen.with_probabilities(np.full(3, 1 / 3))
    mono = solve_mip(builders.build_ccigd_monolithic(p, scen, lam, linearization).model,
                     gap_tol=1e-9).objective
    best = -math.inf
    for drop in (None, 0, 1, 2):
        kept = [scen[n] for n in range(3) if n != drop]
        res = solve_mip(builders.build_ccigd_restricted(p, kept, lam).model, gap_tol=1e-9)
        if res.status is Status.OPTIMAL:
            best = max(best, res.objective)
    assert mono == pytest.approx(best, abs=1e-6)


@pytest.mark.parametrize("pattern", [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)])
def test_fixed_pattern_matches_restricted_model(pattern):
    p, scen, _, lam = tiny_case(5, count=3)
    p = p.with_overrides(risk_tolerance=0.34)
    scen = scen.with_probabilities(np.full(3, 1 / 3))
    built = builders.build_ccigd_monolithic(p, scen, lam)
    lo, up = built.model.lower.copy(), built.model.upper.copy()
    for j, v in zip(built.z_cols, pattern):
        lo[j] = up[j] = v
    fixed = solve_mip(built.model.with_bounds(lo, up), gap_tol=1e-9)
    kept = [scen[n] for n in range(3) if not pattern[n]]
    restricted = solve_mip(builders.build_ccigd_restricted(p, kept, lam).model, gap_tol=1e-9)
    assert fixed.status is restricted.status
    if restricted.status is Status.OPTIMAL:
        assert fixed.objective == pytest.approx(restricted.objective, abs=1e-6)


def test_nonuniform_probability_budget():
    p, scen, _, lam = tiny_case(0, count=3)
    scen = scen.with_probabilities([0.5, 0.3, 0.2])
    p = p.with_overrides(risk_tolerance=0.3)
    built = builders.build_ccigd_monolithic(p, scen, lam)
    res = solve_mip(built.model, gap_tol=1e-9)
    z = [round(res.primal[j]) for j in built.z_cols]
    assert sum(pi for pi, zi in zip(scen.probabilities, z) if zi) <= 0.3 + 1e-12
    assert z[0] == 0


def test_first_stage_costs_telescope():
    p = tiny_problem(4)
    costs = builders.first_stage_costs(p)
    units = np.array([[1, 3]] * p.n_ders)
    tau = p.discount_factors()
    starts = p.period_start_years()
    for k, der in enumerate(p.catalog):
        once = der.unit_capital_cost + der.unit_om_cost
        want = once * (1 * tau[starts[0]] + 2 * tau[starts[1]])
        assert float(costs[k] @ units[k]) == pytest.approx(want, rel=1e-12)


def test_scenario_set_helper_shapes():
    p = tiny_problem(0)
    s = ScenarioSet(p.resources, np.zeros((2, 1, 2, 1, 4)), np.ones((2, 2, 1, 4)), [0.5, 0.5])
    s.check_compatible(p)
    with pytest.raises(ValidationError):
        s.check_compatible(tiny_problem(1))
