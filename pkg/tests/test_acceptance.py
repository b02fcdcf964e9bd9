"""Acceptance criteria, one test per criterion.

Run ``pytest tests/test_acceptance.py -v``; the terminal summary prints a
PASS/FAIL line per criterion.
"""
import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from conftest import FIXTURES, investment_probes, tiny_case
from oracles import bisection_igd, enumerate_mip, enumerate_sp2, tableau_lp
from migplan import benders, builders, evaluation, instances
from migplan.data_model import problem_from_dict
from migplan.milp import solve_lp
from migplan.milp.bnb import branch_and_bound
from migplan.milp.simplex import simplex_solve
from migplan.planning import solve_ccigd, solve_dt, solve_igd
from migplan.scenarios import default_profile, generate, nominal_scenarios, reduce

pytestmark = pytest.mark.acceptance

ALPHA_TOL = 1e-6
TRIANGLE_CASES = [(v, n) for v, n in zip(range(instances.TINY_COUNT), (4, 6, 8, 4, 6, 8))]


def report(cid, ok, detail):
    print(f"[criterion {cid}] {'PASS' if ok else 'FAIL'}: {detail}")


@pytest.mark.criterion("1", "oracle triangle: SBD, monolithic and enumeration agree within 1e-6")
def test_oracle_triangle():
    t0 = time.perf_counter()
    worst = 0.0
    for variant, count in TRIANGLE_CASES:
        problem, scen, _, lam = tiny_case(variant, count)
        sbd = solve_ccigd(problem, scen, lam, "sbd", gap=1e-10)
        mono = solve_ccigd(problem, scen, lam, "mono", gap=1e-10)
        brute = evaluation.brute_force_ccigd(problem, scen, lam)
        values = (sbd.alpha, mono.alpha, brute.alpha)
        spread = max(values) - min(values)
        worst = max(worst, spread)
        assert sbd.status == mono.status == brute.status == "optimal"
        assert spread <= ALPHA_TOL, (variant, values)
    elapsed = time.perf_counter() - t0
    report(1, True, f"{len(TRIANGLE_CASES)} fixtures, max spread {worst:.2e}, {elapsed:.1f}s")
    assert elapsed < 300


@pytest.mark.criterion("2", "reduction chain: CC-IGD(N=1, eps=0) = IGD = bisection oracle")
def test_reduction_chain():
    t0 = time.perf_counter()
    for variant in range(instances.TINY_COUNT):
        problem, _, nominal, lam = tiny_case(variant, epsilon=0.0)
        single = nominal_scenarios(instances.tiny_profile(problem), problem)
        igd = solve_igd(problem, nominal, lam, gap=1e-10)
        cc = solve_ccigd(problem, single, lam, "sbd", gap=1e-10)
        mono = solve_ccigd(problem, single, lam, "mono", gap=1e-10)
        bisect = bisection_igd(problem, nominal, lam)
        assert abs(cc.alpha - igd.alpha) <= ALPHA_TOL, (variant, cc.alpha, igd.alpha)
        assert abs(mono.alpha - igd.alpha) <= ALPHA_TOL, (variant, mono.alpha, igd.alpha)
        assert abs(igd.alpha - bisect) <= 1e-4, (variant, igd.alpha, bisect)
    elapsed = time.perf_counter() - t0
    report(2, True, f"{instances.TINY_COUNT} fixtures, {elapsed:.1f}s")
    assert elapsed < 60


@pytest.mark.criterion("3", "SP2 exactness against 2^N enumeration")
def test_sp2_exactness():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    for trial in range(100):
        N = int(rng.integers(1, 13))
        if trial % 2:
            pr = np.full(N, 1.0 / N)
        else:
            pr = rng.dirichlet(np.ones(N))
            pr = pr / pr.sum()
        eps = float(rng.choice([0.0, rng.uniform(0, 0.5), 1 - 1e-9]))
        cap = 100.0
        first = float(rng.uniform(20, 60))
        costs = rng.uniform(0, 100, N)
        if trial % 5 == 0:
            costs[: N // 2] = costs[0]
        got = benders.solve_sp2(first, costs, pr, cap, eps)
        want, _ = enumerate_sp2(first, costs, pr, cap, eps)
        assert got.delta == want, (trial, got.delta, want)
    elapsed = time.perf_counter() - t0
    report(3, True, f"100 random triples, {elapsed:.1f}s")
    assert elapsed < 60


@pytest.mark.criterion("4", "cut validity: U(alpha, x) <= SP1(alpha, x) + 1e-6 at 20 probes per cut")
def test_cut_validity():
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    checked = worst = 0
    for variant, count in TRIANGLE_CASES:
        problem, scen, _, lam = tiny_case(variant, count)
        cache = benders.DispatchCache(problem, scen)
        for name in ("SBD", "OBD"):
            run = benders.run(problem, scen, lam, name)
            for cut in run.state.all_cuts():
                probes = investment_probes(problem, rng, 20)
                assert len(probes) == 20
                for alpha, units in probes:
                    sp1 = benders.solve_sp1(problem, units, alpha, scen[cut.scenario],
                                            cut.scenario, 0, cache.template(cut.scenario)).cost
                    excess = cut.value(alpha, units) - sp1
                    worst = max(worst, excess)
                    checked += 1
                    assert excess <= 1e-6, (variant, name, cut.iteration, excess)
    elapsed = time.perf_counter() - t0
    report(4, True, f"{checked} probes, worst excess {worst:.2e}, {elapsed:.1f}s")
    assert elapsed < 300


SIGMA_GRID = [0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5]
EPS_GRID = [0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3]


@pytest.mark.criterion("5", "monotonicity of alpha in sigma and epsilon, checked against enumeration")
def test_sweep_monotonicity():
    t0 = time.perf_counter()
    for variant in range(instances.TINY_COUNT):
        problem, scen, _, lam = tiny_case(variant, 8)
        for param, grid in (("sigma", SIGMA_GRID), ("epsilon", EPS_GRID)):
            points = evaluation.sensitivity_sweep(problem, scen, param, grid, lam)
            oracle = [evaluation.brute_force_ccigd(
                problem.with_overrides(**{evaluation.SWEEP_PARAMETERS[param]: g}), scen, lam).alpha
                for g in grid]
            for pt, want in zip(points, oracle):
                assert pt.status == "optimal", (variant, param, pt)
                assert abs(pt.alpha - want) <= ALPHA_TOL, (variant, param, pt.value, pt.alpha, want)
            alphas = [p.alpha for p in points]
            assert all(b >= a - ALPHA_TOL for a, b in zip(alphas, alphas[1:])), (variant, param, alphas)
    elapsed = time.perf_counter() - t0
    report(5, True, f"{instances.TINY_COUNT} fixtures x 2 grids, {elapsed:.1f}s")
    assert elapsed < 600


def _random_lp(rng, m, n):
    A = rng.integers(-5, 6, (m, n)).astype(float)
    A[rng.random((m, n)) < 0.3] = 0.0
    x0 = rng.uniform(0, 3, n)
    sense = rng.choice(["<", ">", "="], m, p=[0.5, 0.3, 0.2])
    act = A @ x0
    b = np.where(sense == "<", act + rng.uniform(0, 2, m), np.where(sense == ">", act - rng.uniform(0, 2, m), act))
    if rng.random() < 0.15:
        b[0] += 50 * (1 if sense[0] == ">" else -1)   # occasionally infeasible
    lower = np.where(rng.random(n) < 0.2, -2.0, 0.0)
    upper = np.where(rng.random(n) < 0.5, rng.uniform(3, 6, n), np.inf)
    c = rng.integers(-4, 5, n).astype(float)
    return c, A, sense, b, lower, upper


@pytest.mark.criterion("6", "LP kernel: duality and tableau agreement on 200 LPs, 50 MIPs vs enumeration")
def test_lp_kernel():
    rng = np.random.default_rng(99)
    t0 = time.perf_counter()
    statuses = {}
    for trial in range(200):
        m, n = int(rng.integers(2, 8)), int(rng.integers(2, 9))
        c, A, sense, b, lo, hi = _random_lp(rng, m, n)
        got = simplex_solve(c, A, sense, b, lo, hi)
        ref_status, ref_obj = tableau_lp(c, A, sense, b, lo, hi)
        statuses[got.status] = statuses.get(got.status, 0) + 1
        assert got.status == ref_status, (trial, got.status, ref_status)
        if got.status != "optimal":
            continue
        assert abs(got.objective - ref_obj) <= 1e-6 * max(1, abs(ref_obj)), (trial, got.objective, ref_obj)
        # dual objective: b.y plus reduced costs times the bound each column sits at
        bound_term = sum(d * (lo[j] if d > 0 else hi[j]) for j, d in enumerate(got.d) if abs(d) > 1e-9)
        dual_obj = float(b @ got.y) + bound_term
        assert abs(dual_obj - got.objective) <= 1e-6 * max(1, abs(got.objective)), (trial, dual_obj)
        assert np.allclose(c - A.T @ got.y, got.d, atol=1e-7)
    for trial in range(50):
        m, n = int(rng.integers(2, 5)), int(rng.integers(2, 5))
        c, A, sense, b, lo, hi = _random_lp(rng, m, n)
        hi = np.where(np.isfinite(hi), hi, 4.0)
        integer = rng.random(n) < 0.7
        got = branch_and_bound(c, A, sense, b, lo, hi, integer, gap_tol=1e-12)
        ref_status, ref_obj = enumerate_mip(c, A, sense, b, lo, hi, integer)
        assert got.status == ref_status, (trial, got.status, ref_status)
        if got.status == "optimal":
            assert abs(got.objective - ref_obj) <= 1e-6 * max(1, abs(ref_obj)), (trial, got.objective, ref_obj)
    elapsed = time.perf_counter() - t0
    report(6, True, f"LP statuses {statuses}, {elapsed:.1f}s")
    assert elapsed < 300


def midsize_case():
    doc = json.loads((FIXTURES / "simple.json").read_text())
    doc["horizon"]["typical_days"] = 2
    problem = problem_from_dict(doc)
    profile = default_profile(2, 24)
    nominal = nominal_scenarios(profile, problem)[0]
    lam = solve_dt(problem, nominal, gap=1e-6).objective
    return problem, generate(profile, problem, 20, seed=5), lam


@pytest.mark.slow
@pytest.mark.criterion("7", "mid-size: SBD and OBD agree, SBD master time below OBD")
def test_obd_sbd_midsize():
    t0 = time.perf_counter()
    problem, scen, lam = midsize_case()
    sbd = benders.run(problem, scen, lam, "SBD", max_iter=200)
    obd = benders.run(problem, scen, lam, "OBD", max_iter=200)
    detail = (f"alpha SBD {sbd.alpha:.8f} ({sbd.iterations} itr, master {sbd.master_solve_time:.1f}s) "
              f"OBD {obd.alpha:.8f} ({obd.iterations} itr, master {obd.master_solve_time:.1f}s)")
    print(detail)
    assert sbd.status == obd.status == "optimal", detail
    assert abs(sbd.alpha - obd.alpha) <= ALPHA_TOL, detail
    assert sbd.master_solve_time < obd.master_solve_time, detail
    elapsed = time.perf_counter() - t0
    report(7, True, f"{detail}, {elapsed:.0f}s")
    assert elapsed < 3600


@pytest.mark.criterion("8", "EPB identity against independently re-solved dispatch LPs")
def test_epb_identity():
    t0 = time.perf_counter()
    problem, scen, nominal, lam = tiny_case(0, 8)
    sol = solve_ccigd(problem, scen, lam, "sbd", gap=1e-10)
    raw = generate(instances.tiny_profile(problem), problem, 30, seed=123)
    reduced = reduce(raw, 6)
    for sset in (raw, reduced):
        rep = evaluation.evaluate_epb(problem, sol.plan, 0.1, sset, sol.budget_cap)
        costs = []
        for n in range(len(sset)):
            lp = builders.build_dispatch_lp(problem, sol.plan, sset[n], 0.1)
            costs.append(solve_lp(lp.model).objective)
        first = builders.first_stage_cost(problem, sol.plan.period_units(problem))
        if sset.provenance == "reduced":
            want = first + math.fsum(p * c for p, c in zip(sset.probabilities, costs))
        else:
            want = first + math.fsum(costs) / len(costs)
        assert rep.epb == want, (sset.provenance, rep.epb, want)
        # second route: the bundled simplex kernel
        alt = [solve_lp(builders.build_dispatch_lp(problem, sol.plan, sset[n], 0.1).model,
                        backend="internal").objective for n in range(len(sset))]
        assert np.allclose(alt, costs, rtol=1e-7)
    elapsed = time.perf_counter() - t0
    report(8, True, f"raw and reduced sets, {elapsed:.1f}s")
    assert elapsed < 300


@pytest.mark.criterion("9", "determinism: identical solution.json across runs")
def test_determinism(tmp_path):
    outs = []
    for run in range(2):
        out = tmp_path / f"run{run}"
        cmd = [sys.executable, "-m", "migplan.cli", "solve", str(FIXTURES / "tiny.json"),
               "--variant", "ccigd-sbd", "--n-scenarios", "6", "--seed", "4", "--out", str(out)]
        proc = subprocess.run(cmd, capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        outs.append(out)
    a, b = ((o / "solution.json").read_bytes() for o in outs)
    assert a == b
    body = [[ln for ln in (o / "summary.csv").read_text().splitlines() if not ln.startswith("#")]
            for o in outs]
    assert body[0] == body[1]
    report(9, True, "solution.json and summary.csv bodies byte-identical")
