"""Bilinear Benders decomposition for the chance-constrained robustness model.

Each iteration solves a master MILP over ``(alpha, X, z, Phi)``, one
dispatch LP per scenario at the master's ``(alpha, X)`` (yielding a cut),
and a small selection problem that decides which scenarios to discard.
The loop stops once the selection problem certifies that the master's
plan keeps the budget in all but an admissible set of scenarios.

Two master formulations are supported:

* ``OBD``: cuts are multiplied by ``(1 - z)`` and linearized with
  per-scenario copies of ``alpha * z`` and ``X * z``.
* ``SBD``: cuts bind the epigraph variable directly and only the budget
  row's ``Phi * (1 - z)`` product is linearized.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from . import builders
from .builders import BuiltModel, VariableIndex, admissible_count
from .data_model import InvestmentPlan, PlanningProblem
from .milp import GE, LE, ModelBuilder, Status, solve_lp, solve_mip
from .scenarios import Scenario, ScenarioSet

VARIANTS = ("SBD", "OBD")
DELTA_TOL = 1e-6
MASTER_GAP = 1e-9


# ---- cuts -------------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class OptimalityCut:
    """Affine underestimator of one scenario's dispatch cost.

    ``U(alpha, X) = constant + alpha_coeff*(alpha - anchor_alpha)
    + sum(x_coeffs * (X - anchor_units))``.
    """

    scenario: int
    iteration: int
    constant: float
    alpha_coeff: float
    x_coeffs: np.ndarray
    anchor_alpha: float
    anchor_units: np.ndarray

    def value(self, alpha: float, units: np.ndarray) -> float:
        return (self.constant + self.alpha_coeff * (alpha - self.anchor_alpha)
                + float(np.sum(self.x_coeffs * (np.asarray(units, dtype=float) - self.anchor_units))))

    @property
    def intercept(self) -> float:
        """Value at ``alpha = 0, X = 0``."""
        return (self.constant - self.alpha_coeff * self.anchor_alpha
                - float(np.sum(self.x_coeffs * self.anchor_units)))

    def to_dict(self) -> dict:
        return {"scenario": self.scenario + 1, "iteration": self.iteration,
                "constant": self.constant, "alpha_coeff": self.alpha_coeff,
                "x_coeffs": self.x_coeffs.tolist(), "anchor_alpha": self.anchor_alpha,
                "anchor_units": self.anchor_units.tolist()}


@dataclass(frozen=True, eq=False)
class SP1Result:
    cost: float
    cut: OptimalityCut
    balance_duals: np.ndarray
    coupling_duals: np.ndarray
    wall_time: float


class DispatchCache:
    """Per-scenario dispatch templates reused across iterations."""

    def __init__(self, problem: PlanningProblem, scenarios: ScenarioSet | Sequence[Scenario]):
        self.problem = problem
        self.scenarios = list(scenarios)
        self._templates: dict[int, BuiltModel] = {}

    def template(self, n: int) -> BuiltModel:
        if n not in self._templates:
            self._templates[n] = builders.dispatch_template(self.problem, self.scenarios[n])
        return self._templates[n]


def solve_sp1(problem: PlanningProblem, period_units: np.ndarray | InvestmentPlan, alpha: float,
              scenario: Scenario, n: int = 0, iteration: int = 0,
              template: BuiltModel | None = None, backend: str | None = None) -> SP1Result:
    """Dispatch LP for one scenario plus the optimality cut built from its duals.

    Cut slopes are ``-dual.A[:, col]`` over the fixed parameter columns,
    i.e. the sensitivity of the optimal cost to ``alpha`` and each ``X``.
    """
    t0 = time.perf_counter()
    tpl = template or builders.dispatch_template(problem, scenario)
    if isinstance(period_units, InvestmentPlan):
        period_units = period_units.period_units(problem)
    units = np.asarray(period_units, dtype=float)
    fixed = builders.fix_dispatch(tpl, units, alpha)
    res = solve_lp(fixed.model, backend=backend)
    if res.status is not Status.OPTIMAL:
        raise RuntimeError(f"dispatch LP for scenario {n + 1} ended {res.status.value}")
    y = res.duals
    A = fixed.model.A.tocsc()
    a_col = A[:, tpl.alpha_col]
    alpha_coeff = -float((a_col.T @ y)[0]) if a_col.nnz else 0.0
    xc = tpl.x_cols
    x_coeffs = -(A[:, xc.ravel()].T @ y).reshape(xc.shape)
    cut = OptimalityCut(n, iteration, float(res.objective), alpha_coeff, np.asarray(x_coeffs, dtype=float),
                        float(alpha), units.copy())
    bal = fixed.model.rows_in("power-balance")
    coupled = np.unique(A[:, xc.ravel()].tocsr().nonzero()[0])
    return SP1Result(float(res.objective), cut, y[bal], y[coupled], time.perf_counter() - t0)


# ---- scenario selection ---------------------------------------------------------------------

@dataclass(frozen=True)
class SP2Result:
    delta: float
    z: tuple[int, ...]
    violations: tuple[float, ...]


def _admissible(selected: Sequence[int], probabilities: np.ndarray, epsilon: float) -> bool:
    count = admissible_count(probabilities, epsilon)
    if count is not None:
        return len(selected) <= count
    return math.fsum(probabilities[list(selected)]) <= epsilon * (1 + builders.PROB_TOL)


def _remaining(violations: Sequence[float], discard: set[int]) -> float:
    return math.fsum(v for n, v in enumerate(violations) if v > 0 and n not in discard)


def _lex_better(a: Sequence[int], b: Sequence[int]) -> bool:
    """True when the indicator vector of ``a`` is lexicographically larger than ``b``'s."""
    sa, sb = sorted(a), sorted(b)
    for x, y in zip(sa, sb):
        if x != y:
            return x < y
    return len(sa) > len(sb)


def _knapsack(values: list[Fraction], weights: list[Fraction], ids: list[int],
              cap: Fraction, max_count: int | None) -> list[int]:
    """Exact 0/1 knapsack maximizing discarded violation; lexicographic tie-break."""
    order = sorted(range(len(ids)), key=lambda i: (-(values[i] / weights[i]), ids[i]))
    best_val = Fraction(-1)
    best_set: list[int] = []

    def bound(pos, room, count, acc):
        total = acc
        for i in order[pos:]:
            if max_count is not None and count >= max_count:
                break
            if weights[i] <= room:
                room -= weights[i]
                total += values[i]
                count += 1
            else:
                return total + values[i] * room / weights[i]
        return total

    def dfs(pos, room, count, acc, chosen):
        nonlocal best_val, best_set
        if pos == len(order):
            if acc > best_val or (acc == best_val and _lex_better(chosen, best_set)):
                best_val, best_set = acc, list(chosen)
            return
        if bound(pos, room, count, acc) < best_val:
            return
        i = order[pos]
        if weights[i] <= room and (max_count is None or count < max_count):
            chosen.append(ids[i])
            dfs(pos + 1, room - weights[i], count + 1, acc + values[i], chosen)
            chosen.pop()
        dfs(pos + 1, room, count, acc, chosen)

    dfs(0, cap, 0, Fraction(0), [])
    return best_set


def solve_sp2(first_stage_cost: float, costs: Sequence[float], probabilities: Sequence[float],
              cap: float, epsilon: float, method: str = "exact") -> SP2Result:
    """Discard an admissible set of scenarios minimizing the remaining budget excess.

    Only scenarios whose budget is violated are candidates for discarding.
    Among equally good choices the indicator vector that is
    lexicographically largest wins (lower scenario numbers go first).
    ``method`` is ``exact``, ``greedy`` (uniform probabilities only) or
    ``mip`` (generic solver, for cross-checks).
    """
    pr = np.asarray(probabilities, dtype=float)
    viol = [(first_stage_cost + float(c)) - cap for c in costs]
    N = len(viol)
    pos = [n for n in range(N) if viol[n] > 0]
    if not pos:
        return SP2Result(0.0, (0,) * N, tuple(viol))
    count = admissible_count(pr, epsilon)
    if method == "greedy":
        if count is None:
            raise ValueError("greedy selection needs uniform probabilities")
        chosen = sorted(pos, key=lambda n: (-viol[n], n))[:count]
    elif method == "exact":
        if count is not None:
            chosen = sorted(pos, key=lambda n: (-viol[n], n))[:count]
        else:
            chosen = _knapsack([Fraction(viol[n]) for n in pos], [Fraction(float(pr[n])) for n in pos],
                               pos, Fraction(epsilon) * (1 + Fraction(builders.PROB_TOL)), None)
    elif method == "mip":
        chosen = _sp2_mip(viol, pr, epsilon)
    else:
        raise ValueError(f"unknown method {method!r}")
    z = tuple(1 if n in chosen else 0 for n in range(N))
    return SP2Result(_remaining(viol, set(chosen)), z, tuple(viol))


def _sp2_mip(viol: list[float], pr: np.ndarray, epsilon: float) -> list[int]:
    mb = ModelBuilder("sp2")
    N = len(viol)
    zc = [mb.add_var(f"z[{n + 1}]", upper=1.0, integer=True) for n in range(N)]
    for n in range(N):
        tn = mb.add_var(f"t[{n + 1}]", obj=1.0)
        # t_n >= v_n (1 - z_n)
        mb.add_row(f"excess[{n + 1}]", {tn: 1.0, zc[n]: viol[n]}, GE, viol[n], "excess")
    builders._add_probability_budget(mb, zc, pr, epsilon)
    res = solve_mip(mb.seal(), gap_tol=0.0)
    return [n for n in range(N) if res.primal[zc[n]] > 0.5 and viol[n] > 0]


# ---- master ---------------------------------------------------------------------------------------

def scenario_cost_bounds(problem: PlanningProblem, scenarios: ScenarioSet) -> np.ndarray:
    return np.array([builders.recourse_cost_bound(problem, scenarios.load[n])
                     for n in range(len(scenarios))])


def build_master(problem: PlanningProblem, scenarios: ScenarioSet, lambda0: float,
                 cuts: dict[int, list[OptimalityCut]], variant: str = "SBD",
                 phi_bounds: np.ndarray | None = None) -> BuiltModel:
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    N = len(scenarios)
    cap = problem.budget_multiplier * lambda0
    phibar = scenario_cost_bounds(problem, scenarios) if phi_bounds is None else phi_bounds
    mb = ModelBuilder(f"master-{variant}", maximize=True)
    idx = VariableIndex()
    a = idx.add(mb, "alpha", upper=problem.alpha_cap, obj=1.0)
    xc = builders._add_investment(mb, idx, problem, problem.demand_forecast, a)
    for j in xc.ravel():
        mb.set_obj(int(j), 0.0)
    costs = builders.first_stage_costs(problem)
    ub = problem.period_unit_bounds()
    zc = tuple(idx.add(mb, "z", n + 1, upper=1.0, integer=True) for n in range(N))
    phi = tuple(idx.add(mb, "Phi", n + 1, upper=float(phibar[n])) for n in range(N))
    builders._add_probability_budget(mb, zc, scenarios.probabilities, problem.risk_tolerance)
    first = {int(j): costs[k, p] for (k, p), j in np.ndenumerate(xc)}
    for n in range(N):
        pool = cuts.get(n, [])
        if variant == "SBD":
            w = idx.add(mb, "w", n + 1)
            mb.add_row(f"budget[{n + 1}]", {**first, w: 1.0}, LE, cap, "budget")
            mb.add_row(f"epigraph-link[{n + 1}]", {w: 1.0, phi[n]: -1.0, zc[n]: float(phibar[n])},
                       GE, 0.0, "epigraph-link")
            for c, cut in enumerate(pool):
                terms = {a: cut.alpha_coeff, phi[n]: -1.0}
                for (k, p), j in np.ndenumerate(xc):
                    terms[int(j)] = terms.get(int(j), 0.0) + cut.x_coeffs[k, p]
                mb.add_row(f"cut[{n + 1},{c + 1}]", terms, LE, -cut.intercept,
                           "optimality-cut")
            continue
        mb.add_row(f"budget[{n + 1}]", {**first, phi[n]: 1.0}, LE, cap, "budget")
        if not pool:
            continue
        az = idx.add(mb, "alpha_z", n + 1, upper=problem.alpha_cap)
        builders._add_mccormick(mb, az, a, zc[n], problem.alpha_cap, f"alpha,{n + 1}")
        xz = np.empty_like(xc)
        for (k, p), j in np.ndenumerate(xc):
            xz[k, p] = idx.add(mb, "X_z", problem.catalog[k].id, p + 1, n + 1, upper=ub[k, p])
            builders._add_mccormick(mb, int(xz[k, p]), int(j), zc[n], ub[k, p],
                                    f"X,{problem.catalog[k].id},{p + 1},{n + 1}")
        for c, cut in enumerate(pool):
            # (1 - z) U <= Phi, expanded with alpha*z and X*z replaced
            u0 = cut.intercept
            terms = {a: cut.alpha_coeff, az: -cut.alpha_coeff, zc[n]: -u0, phi[n]: -1.0}
            for (k, p), j in np.ndenumerate(xc):
                terms[int(j)] = cut.x_coeffs[k, p]
                terms[int(xz[k, p])] = -cut.x_coeffs[k, p]
            mb.add_row(f"cut[{n + 1},{c + 1}]", terms, LE, -u0, "optimality-cut")
    return BuiltModel(mb.seal(), idx, xc, alpha_col=a, z_cols=zc)


@dataclass(frozen=True, eq=False)
class MasterSolution:
    status: Status
    alpha: float = math.nan
    units: np.ndarray | None = None
    z: tuple[int, ...] = ()
    phis: tuple[float, ...] = ()
    objective: float = math.nan
    build_time: float = 0.0
    solve_time: float = 0.0


def solve_master(state: "BendersState", variant: str, lambda0: float, problem: PlanningProblem,
                 scenarios: ScenarioSet, time_limit: float | None = None,
                 backend: str | None = None) -> MasterSolution:
    t0 = time.perf_counter()
    built = build_master(problem, scenarios, lambda0, state.cuts, variant, state.phi_bounds)
    t1 = time.perf_counter()
    res = solve_mip(built.model, gap_tol=MASTER_GAP, time_limit=time_limit, backend=backend)
    t2 = time.perf_counter()
    if res.status is Status.INFEASIBLE:
        return MasterSolution(Status.INFEASIBLE, build_time=t1 - t0, solve_time=t2 - t1)
    if res.primal is None:
        return MasterSolution(res.status, build_time=t1 - t0, solve_time=t2 - t1)
    x = res.primal
    phis = tuple(float(x[built.index["Phi", n + 1]]) for n in range(len(scenarios)))
    return MasterSolution(res.status, alpha=float(x[built.alpha_col]),
                          units=np.round(x[built.x_cols]).astype(int),
                          z=tuple(int(round(x[j])) for j in built.z_cols), phis=phis,
                          objective=float(res.objective), build_time=t1 - t0, solve_time=t2 - t1)


# ---- driver --------------------------------------------------------------------------------------

@dataclass
class BendersState:
    iteration: int = 0
    cuts: dict[int, list[OptimalityCut]] = field(default_factory=dict)
    alpha: float = math.nan
    units: np.ndarray | None = None
    z: tuple[int, ...] = ()
    delta: float = math.inf
    log: list[dict] = field(default_factory=list)
    phi_bounds: np.ndarray | None = None

    @property
    def cut_count(self) -> int:
        return sum(len(v) for v in self.cuts.values())

    def add_cut(self, cut: OptimalityCut) -> None:
        self.cuts.setdefault(cut.scenario, []).append(cut)

    def all_cuts(self) -> list[OptimalityCut]:
        return [c for n in sorted(self.cuts) for c in self.cuts[n]]


@dataclass(frozen=True, eq=False)
class BendersResult:
    status: str                  # optimal | infeasible | limit
    alpha: float
    units: np.ndarray | None     # (K, P) period units
    z: tuple[int, ...]
    phis: tuple[float, ...]
    delta: float
    iterations: int
    upper_bound: float
    gap: float
    state: BendersState
    master_build_time: float
    master_solve_time: float
    sp1_time: float
    sp2_time: float
    wall_time: float


def run(problem: PlanningProblem, scenarios: ScenarioSet, lambda0: float, variant: str = "SBD",
        max_iter: int = 100, time_limit: float | None = None, delta_tol: float = DELTA_TOL,
        sp2_method: str = "exact", backend: str | None = None,
        log_path: str | Path | None = None) -> BendersResult:
    """Iterate master, dispatch subproblems and selection until the plan is certified."""
    if not lambda0 > 0:
        raise ValueError("lambda0 must be > 0")
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    scenarios.check_compatible(problem)
    t_start = time.perf_counter()
    cap = problem.budget_multiplier * lambda0
    cache = DispatchCache(problem, scenarios)
    state = BendersState(phi_bounds=scenario_cost_bounds(problem, scenarios))
    times = dict(build=0.0, master=0.0, sp1=0.0, sp2=0.0)
    status, ub = "limit", math.inf
    log_fh = open(log_path, "w") if log_path else None
    phis: tuple[float, ...] = ()
    try:
        while True:
            elapsed = time.perf_counter() - t_start
            if state.iteration >= max_iter or (time_limit is not None and elapsed >= time_limit):
                break
            remaining = None if time_limit is None else max(time_limit - elapsed, 1e-3)
            ms = solve_master(state, variant, lambda0, problem, scenarios, remaining, backend)
            times["build"] += ms.build_time
            times["master"] += ms.solve_time
            if ms.status is Status.INFEASIBLE:
                status = "infeasible"
                break
            if ms.status is not Status.OPTIMAL:
                break
            state.iteration += 1
            state.alpha, state.units = ms.alpha, ms.units
            ub = ms.alpha
            t0 = time.perf_counter()
            results = [solve_sp1(problem, ms.units, ms.alpha, scenarios[n], n, state.iteration,
                                 cache.template(n), backend) for n in range(len(scenarios))]
            t1 = time.perf_counter()
            for r in results:
                state.add_cut(r.cut)
            phis = tuple(r.cost for r in results)
            first = builders.first_stage_cost(problem, ms.units)
            sp2 = solve_sp2(first, phis, scenarios.probabilities, cap, problem.risk_tolerance,
                            sp2_method)
            t2 = time.perf_counter()
            times["sp1"] += t1 - t0
            times["sp2"] += t2 - t1
            state.delta, state.z = sp2.delta, sp2.z
            entry = {"iteration": state.iteration, "master_alpha": ms.alpha,
                     "master_objective": ms.objective, "delta": sp2.delta,
                     "discarded": [n + 1 for n, v in enumerate(sp2.z) if v],
                     "cuts": state.cut_count, "master_build_s": ms.build_time,
                     "master_solve_s": ms.solve_time, "sp1_s": t1 - t0, "sp2_s": t2 - t1}
            state.log.append(entry)
            if log_fh:
                log_fh.write(json.dumps(entry) + "\n")
                log_fh.flush()
            if sp2.delta <= delta_tol * cap:
                status = "optimal"
                break
    finally:
        if log_fh:
            log_fh.close()

    alpha, units, z, gap = state.alpha, state.units, state.z, 0.0
    if status == "limit":
        alpha, z, phis = _feasible_alpha(problem, scenarios, lambda0, state, cache, sp2_method, backend)
        if math.isnan(alpha):
            units, gap = None, math.inf
        else:
            gap = abs(ub - alpha) / max(1.0, abs(alpha)) if math.isfinite(ub) else math.inf
    elif status == "infeasible":
        alpha, units, z, gap = math.nan, None, (), math.nan
    return BendersResult(status, alpha, units, z, phis, state.delta, state.iteration, ub, gap, state,
                         times["build"], times["master"], times["sp1"], times["sp2"],
                         time.perf_counter() - t_start)


def _feasible_alpha(problem, scenarios, lambda0, state, cache, sp2_method, backend, steps: int = 20):
    """Largest horizon (by bisection) certified feasible for the last master plan."""
    if state.units is None:
        return math.nan, (), ()
    cap = problem.budget_multiplier * lambda0
    first = builders.first_stage_cost(problem, state.units)
    pr = scenarios.probabilities
    totals = (problem.catalog[k].rated_power for k in range(problem.n_ders))
    rated = np.array(list(totals))
    pyear = problem.period_of_year()

    def check(alpha):
        for t in range(problem.years):
            supply = float(rated @ state.units[:, pyear[t]])
            if supply < (1 + alpha) * problem.demand_forecast[t] + problem.long_term_reserve[t] - 1e-9:
                return None
        costs = [solve_sp1(problem, state.units, alpha, scenarios[n], n, 0, cache.template(n),
                           backend).cost for n in range(len(scenarios))]
        sp2 = solve_sp2(first, costs, pr, cap, problem.risk_tolerance, sp2_method)
        return (sp2, costs) if sp2.delta <= DELTA_TOL * cap else None

    best = check(0.0)
    if best is None:
        return math.nan, (), ()
    lo, hi = 0.0, state.alpha
    top = check(hi)
    if top is not None:
        return hi, top[0].z, tuple(top[1])
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        got = check(mid)
        if got is None:
            hi = mid
        else:
            lo, best = mid, got
    return lo, best[0].z, tuple(best[1])
