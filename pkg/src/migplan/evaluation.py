"""Out-of-sample evaluation, sensitivity sweeps and the enumeration oracle."""
from __future__ import annotations

import csv
import itertools
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import builders
from .data_model import SCHEMA_VERSION, DerKind, InvestmentPlan, PlanningProblem, ValidationError
from .milp import Status, solve_lp, solve_mip
from .scenarios import ScenarioSet

MAX_ORACLE_SCENARIOS = 12
SWEEP_PARAMETERS = {"sigma": "deviation_factor", "epsilon": "risk_tolerance"}


class InadequatePlanError(ValidationError):
    pass


@dataclass(frozen=True, eq=False)
class EvaluationReport:
    plan_id: str
    alpha: float
    first_stage_cost: float
    costs: tuple[float, ...]
    probabilities: tuple[float, ...]
    epb: float
    weighting: str                    # "probability" or "mean"
    budget_cap: float
    violation_rate: float
    peak_served: float
    scenario_set: str

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "plan_id": self.plan_id, "alpha": self.alpha,
                "first_stage_cost": self.first_stage_cost, "epb": self.epb,
                "weighting": self.weighting,
                "budget_cap": None if math.isinf(self.budget_cap) else self.budget_cap,
                "violation_rate": None if math.isnan(self.violation_rate) else self.violation_rate,
                "peak_served_kw": self.peak_served, "scenario_set": self.scenario_set,
                "costs": list(self.costs)}


def adequacy_shortfall(problem: PlanningProblem, plan: InvestmentPlan, alpha: float) -> list[str]:
    """Investment rows violated by ``plan`` when demand is ``(1 + alpha)`` times the forecast."""
    out = []
    rated = np.array([d.rated_power for d in problem.catalog])
    dfg = problem.ders(DerKind.DFG)
    for t in range(problem.years):
        need = (1 + alpha) * problem.demand_forecast[t]
        have = float(rated @ plan.units[:, t])
        if have < need + problem.long_term_reserve[t] - 1e-9:
            out.append(f"year {t + 1}: capacity {have:g} kW below {need + problem.long_term_reserve[t]:g} kW")
        if dfg:
            firm = float(rated[dfg] @ plan.units[dfg, t])
            if firm < problem.dfg_min_ratio * need - 1e-9:
                out.append(f"year {t + 1}: dispatchable capacity {firm:g} kW below minimum share")
    return out


def evaluate_epb(problem: PlanningProblem, plan: InvestmentPlan, alpha: float,
                 scenarios: ScenarioSet, budget_cap: float = math.inf, plan_id: str = "plan",
                 strict: bool = True, backend: str | None = None) -> EvaluationReport:
    """Expected project budget of a fixed plan at horizon ``alpha``.

    Reduced sets are averaged with their probabilities; raw sets use the
    plain mean. With ``strict=False`` an inadequate plan only warns.
    """
    plan.check(problem)
    scenarios.check_compatible(problem)
    short = adequacy_shortfall(problem, plan, alpha)
    if short:
        if strict:
            raise InadequatePlanError("plan", "; ".join(short))
        warnings.warn("plan inadequate at this horizon: " + "; ".join(short), stacklevel=2)
    units = plan.period_units(problem)
    first = builders.first_stage_cost(problem, units)
    costs, peak = [], 0.0
    for n in range(len(scenarios)):
        s = scenarios[n]
        tpl = builders.dispatch_template(problem, s)
        fixed = builders.fix_dispatch(tpl, units, alpha)
        res = solve_lp(fixed.model, backend=backend)
        if res.status is not Status.OPTIMAL:
            raise RuntimeError(f"dispatch LP for scenario {s.id} ended {res.status.value}")
        costs.append(float(res.objective))
        curtail = tpl.index.role("Plc")
        for (t, d, h), j in curtail.items():
            served = (1 + alpha) * problem.demand_forecast[t - 1] * s.load_factor[t - 1, d - 1, h - 1]
            peak = max(peak, served - float(res.primal[j]))
    weighting = "probability" if scenarios.provenance == "reduced" else "mean"
    epb = first + _expected(costs, scenarios.probabilities, weighting)
    rate = (sum(1 for c in costs if first + c > budget_cap) / len(costs)
            if math.isfinite(budget_cap) else math.nan)
    return EvaluationReport(plan_id, float(alpha), first, tuple(costs),
                            tuple(float(p) for p in scenarios.probabilities), epb, weighting,
                            budget_cap, rate, peak, f"{scenarios.provenance}:{scenarios.seed}:{len(scenarios)}")


def _expected(costs: Sequence[float], probabilities: Sequence[float], weighting: str) -> float:
    if weighting == "probability":
        return math.fsum(p * c for p, c in zip(probabilities, costs))
    return math.fsum(costs) / len(costs)


# ---- enumeration oracle -----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class OracleResult:
    status: str
    alpha: float
    units: np.ndarray | None
    z: tuple[int, ...]
    patterns: int
    by_pattern: dict[tuple[int, ...], float] = field(default_factory=dict)


def admissible_patterns(probabilities: Sequence[float], epsilon: float,
                        maximal_only: bool = False) -> list[tuple[int, ...]]:
    pr = np.asarray(probabilities, dtype=float)
    N = len(pr)
    count = builders.admissible_count(pr, epsilon)
    out = []
    for z in itertools.product((0, 1), repeat=N):
        chosen = [n for n in range(N) if z[n]]
        if count is not None:
            ok = len(chosen) <= count
        else:
            ok = math.fsum(pr[chosen]) <= epsilon * (1 + builders.PROB_TOL)
        if ok:
            out.append(z)
    if maximal_only:
        keep = set(out)
        out = [z for z in out
               if not any(z[n] == 0 and (z[:n] + (1,) + z[n + 1:]) in keep for n in range(N))]
    return out


def brute_force_ccigd(problem: PlanningProblem, scenarios: ScenarioSet, lambda0: float,
                      maximal_only: bool = False, gap: float = 1e-9,
                      backend: str | None = None) -> OracleResult:
    """Best horizon over every admissible discard pattern, each solved as a restricted MILP.

    Ties in ``alpha`` go to the lexicographically largest pattern.
    """
    N = len(scenarios)
    if N > MAX_ORACLE_SCENARIOS:
        raise ValueError(f"enumeration oracle supports at most {MAX_ORACLE_SCENARIOS} scenarios, got {N}")
    scenarios.check_compatible(problem)
    best: tuple | None = None
    values: dict[tuple[int, ...], float] = {}
    patterns = admissible_patterns(scenarios.probabilities, problem.risk_tolerance, maximal_only)
    for z in patterns:
        kept = [scenarios[n] for n in range(N) if not z[n]]
        built = builders.build_ccigd_restricted(problem, kept, lambda0, name="oracle")
        res = solve_mip(built.model, gap_tol=gap, backend=backend)
        if not res.has_solution or res.status is not Status.OPTIMAL:
            values[z] = math.nan
            continue
        a = float(res.primal[built.alpha_col])
        values[z] = a
        if best is None or a > best[0] + 1e-9 or (abs(a - best[0]) <= 1e-9 and z > best[1]):
            best = (a, z, np.round(res.primal[built.x_cols]).astype(int))
    if best is None:
        return OracleResult("infeasible", math.nan, None, (), len(patterns), values)
    return OracleResult("optimal", best[0], best[2], best[1], len(patterns), values)


# ---- sweeps -------------------------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepPoint:
    parameter: str
    value: float
    status: str
    alpha: float


def sensitivity_sweep(problem: PlanningProblem, scenarios: ScenarioSet, parameter: str,
                      grid: Sequence[float], lambda0: float,
                      solver: Callable[[PlanningProblem, ScenarioSet, float], tuple[str, float]] | None = None
                      ) -> list[SweepPoint]:
    """One chance-constrained solve per grid value of ``sigma`` or ``epsilon``.

    ``solver`` maps ``(problem, scenarios, lambda0)`` to ``(status, alpha)``
    and defaults to the strengthened Benders loop. Failures are recorded
    per point and do not stop the sweep.
    """
    if parameter not in SWEEP_PARAMETERS:
        raise ValueError(f"parameter must be one of {sorted(SWEEP_PARAMETERS)}")
    grid = [float(g) for g in grid]
    if not grid:
        raise ValueError("grid must be nonempty")
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be sorted ascending")
    if solver is None:
        from .planning import solve_ccigd

        def solver(p, s, lam):
            sol = solve_ccigd(p, s, lam, "sbd")
            return sol.status, sol.alpha
    out = []
    for g in grid:
        try:
            prob = problem.with_overrides(**{SWEEP_PARAMETERS[parameter]: g})
            status, alpha = solver(prob, scenarios, lambda0)
        except (ValueError, RuntimeError) as exc:
            status, alpha = f"error: {exc}", math.nan
        out.append(SweepPoint(parameter, g, status, alpha))
    return out


# ---- CSV output ---------------------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def _write_csv(path: str | Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema_version={SCHEMA_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def write_epb_csv(report: EvaluationReport, path: str | Path) -> None:
    """Columns: scenario, probability, dispatch_cost, total_cost, over_cap.

    A final row with scenario ``EPB`` carries the expected project budget.
    """
    rows = []
    for n, (p, c) in enumerate(zip(report.probabilities, report.costs)):
        total = report.first_stage_cost + c
        rows.append([n + 1, p, c, total, int(total > report.budget_cap)])
    rows.append(["EPB", "", "", report.epb, ""])
    _write_csv(path, ["scenario", "probability", "dispatch_cost", "total_cost", "over_cap"], rows)


def write_sweep_csv(points: Sequence[SweepPoint], path: str | Path) -> None:
    """Columns: parameter, value, status, alpha."""
    _write_csv(path, ["parameter", "value", "status", "alpha"],
               [[p.parameter, p.value, p.status, p.alpha] for p in points])
