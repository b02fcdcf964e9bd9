"""End-to-end solves: deterministic budget, single-level and chance-constrained horizons."""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import benders, builders
from .data_model import SCHEMA_VERSION, InvestmentPlan, PlanningProblem
from .milp import DEFAULT_GAP, Status, solve_mip
from .scenarios import Scenario, ScenarioSet

VARIANTS = ("dt", "igd", "ccigd-sbd", "ccigd-obd", "ccigd-mono", "oracle")


@dataclass(frozen=True, eq=False)
class PlanSolution:
    """Outcome of one solve.

    ``objective`` is the total budget for ``dt`` and the robustness horizon
    otherwise. ``wall_time`` and ``timings`` are kept out of ``to_dict`` so
    serialized solutions are reproducible.
    """

    variant: str
    status: str                       # optimal | infeasible | limit
    objective: float
    alpha: float
    plan: InvestmentPlan | None
    lambda0: float
    budget_cap: float
    first_stage_cost: float = math.nan
    scenario_costs: tuple[float, ...] = ()
    z: tuple[int, ...] = ()
    iterations: int = 0
    gap: float = 0.0
    annual_energy: dict[str, list[float]] = field(default_factory=dict)
    curtailed_energy: list[float] = field(default_factory=list)
    wall_time: float = 0.0
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def violations(self) -> int:
        if math.isinf(self.budget_cap):
            return 0
        return sum(1 for c in self.scenario_costs if self.first_stage_cost + c > self.budget_cap)

    def to_dict(self, problem: PlanningProblem | None = None) -> dict:
        def num(v):
            return None if v is None or (isinstance(v, float) and not math.isfinite(v)) else v
        return {
            "schema_version": SCHEMA_VERSION,
            "variant": self.variant,
            "status": self.status,
            "objective": num(self.objective),
            "alpha": num(self.alpha),
            "lambda0": num(self.lambda0),
            "budget_cap": num(self.budget_cap),
            "plan": None if self.plan is None else self.plan.to_dict(problem),
            "z": list(self.z),
            "iterations": self.iterations,
            "gap": num(self.gap),
            "audit": {
                "first_stage_cost": num(self.first_stage_cost),
                "scenario_costs": list(self.scenario_costs),
                "violations": self.violations,
                "annual_energy": self.annual_energy,
                "curtailed_energy": self.curtailed_energy,
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PlanSolution":
        def num(v):
            return math.nan if v is None else float(v)
        audit = d.get("audit", {})
        plan = InvestmentPlan.from_dict(d["plan"]) if d.get("plan") else None
        return cls(variant=d["variant"], status=d["status"], objective=num(d["objective"]),
                   alpha=num(d["alpha"]), plan=plan, lambda0=num(d["lambda0"]),
                   budget_cap=num(d["budget_cap"]) if d.get("budget_cap") is not None else math.inf,
                   first_stage_cost=num(audit.get("first_stage_cost")),
                   scenario_costs=tuple(audit.get("scenario_costs", ())), z=tuple(d.get("z", ())),
                   iterations=int(d.get("iterations", 0)), gap=num(d.get("gap")),
                   annual_energy=audit.get("annual_energy", {}),
                   curtailed_energy=audit.get("curtailed_energy", []))

    def save(self, path: str | Path, problem: PlanningProblem | None = None) -> None:
        Path(path).write_text(json.dumps(self.to_dict(problem), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "PlanSolution":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _status(res) -> str:
    if res.status is Status.OPTIMAL:
        return "optimal"
    if res.status is Status.INFEASIBLE:
        return "infeasible"
    if res.status is Status.UNBOUNDED:
        raise RuntimeError("planning model reported unbounded")
    return "limit"


def _energy(problem: PlanningProblem, built: builders.BuiltModel, primal: np.ndarray,
            tag: tuple = ()) -> tuple[dict[str, list[float]], list[float]]:
    """Annual generation per DER and annual curtailment, in kWh."""
    T, scale = problem.years, problem.day_scale
    width = len(tag)
    out: dict[str, np.ndarray] = {}
    curtail = np.zeros(T)
    for key, j in built.index.cols.items():
        role, sub = key[0], key[1:]
        if sub[:width] != tag:
            continue
        sub = sub[width:]
        if role == "P":
            out.setdefault(sub[0], np.zeros(T))[sub[1] - 1] += primal[j] * scale
        elif role == "Pdis":
            out.setdefault(sub[0], np.zeros(T))[sub[1] - 1] += primal[j] * scale
        elif role == "Plc":
            curtail[sub[0] - 1] += primal[j] * scale
    order = [d.id for d in problem.catalog if d.id in out]
    return {k: out[k].tolist() for k in order}, curtail.tolist()


def solve_dt(problem: PlanningProblem, nominal: Scenario, gap: float = DEFAULT_GAP,
             time_limit: float | None = None, backend: str | None = None) -> PlanSolution:
    """Minimum total budget at the forecast; its objective is the risk-neutral budget."""
    t0 = time.perf_counter()
    built = builders.build_deterministic(problem, problem.demand_forecast, nominal)
    res = solve_mip(built.model, gap_tol=gap, time_limit=time_limit, backend=backend)
    status = _status(res)
    if not res.has_solution:
        return PlanSolution("dt", status, math.nan, 0.0, None, math.nan, math.inf, gap=math.inf,
                            wall_time=time.perf_counter() - t0)
    plan = built.plan(problem, res.primal)
    first = builders.first_stage_cost(problem, plan.period_units(problem))
    energy, curtail = _energy(problem, built, res.primal)
    return PlanSolution("dt", status, res.objective, 0.0, plan, res.objective, math.inf,
                        first_stage_cost=first, scenario_costs=(res.objective - first,),
                        gap=res.gap, annual_energy=energy, curtailed_energy=curtail,
                        wall_time=time.perf_counter() - t0)


def solve_igd(problem: PlanningProblem, nominal: Scenario, lambda0: float,
              gap: float = DEFAULT_GAP, time_limit: float | None = None,
              backend: str | None = None) -> PlanSolution:
    t0 = time.perf_counter()
    built = builders.build_igd(problem, lambda0, nominal)
    res = solve_mip(built.model, gap_tol=gap, time_limit=time_limit, backend=backend)
    cap = problem.budget_multiplier * lambda0
    status = _status(res)
    if not res.has_solution:
        return PlanSolution("igd", status, math.nan, math.nan, None, lambda0, cap, gap=math.inf,
                            wall_time=time.perf_counter() - t0)
    plan = built.plan(problem, res.primal)
    first = builders.first_stage_cost(problem, plan.period_units(problem))
    alpha = float(res.primal[built.alpha_col])
    energy, curtail = _energy(problem, built, res.primal, (nominal.id,))
    recourse = benders.solve_sp1(problem, plan, alpha, nominal, backend=backend).cost
    return PlanSolution("igd", status, alpha, alpha, plan, lambda0, cap, first_stage_cost=first,
                        scenario_costs=(recourse,), gap=res.gap, annual_energy=energy,
                        curtailed_energy=curtail, wall_time=time.perf_counter() - t0)


def _audit_costs(problem, scenarios, plan, alpha, backend) -> tuple[float, ...]:
    cache = benders.DispatchCache(problem, scenarios)
    units = plan.period_units(problem)
    return tuple(benders.solve_sp1(problem, units, alpha, scenarios[n], n, 0, cache.template(n),
                                   backend).cost for n in range(len(scenarios)))


def solve_ccigd(problem: PlanningProblem, scenarios: ScenarioSet, lambda0: float,
                method: str = "sbd", gap: float = DEFAULT_GAP, time_limit: float | None = None,
                max_iter: int = 100, backend: str | None = None,
                log_path: str | Path | None = None, linearization: str = "bigm") -> PlanSolution:
    """Chance-constrained horizon via Benders (``sbd``/``obd``), one MILP (``mono``) or enumeration (``oracle``)."""
    from .evaluation import brute_force_ccigd

    t0 = time.perf_counter()
    cap = problem.budget_multiplier * lambda0
    name = "oracle" if method == "oracle" else f"ccigd-{method}"
    timings: dict[str, float] = {}
    iterations, z, gap_out = 0, (), 0.0
    if method in ("sbd", "obd"):
        out = benders.run(problem, scenarios, lambda0, method.upper(), max_iter=max_iter,
                          time_limit=time_limit, backend=backend, log_path=log_path)
        status, alpha, units = out.status, out.alpha, out.units
        iterations, z, gap_out = out.iterations, out.z, out.gap
        timings = {"master_build": out.master_build_time, "master_solve": out.master_solve_time,
                   "sp1": out.sp1_time, "sp2": out.sp2_time}
    elif method == "mono":
        built = builders.build_ccigd_monolithic(problem, scenarios, lambda0, linearization)
        remaining = None if time_limit is None else time_limit - (time.perf_counter() - t0)
        if remaining is not None and remaining <= 0:
            return PlanSolution(name, "limit", math.nan, math.nan, None, lambda0, cap,
                                gap=math.inf, wall_time=time.perf_counter() - t0)
        res = solve_mip(built.model, gap_tol=gap, time_limit=remaining, backend=backend)
        status = _status(res)
        if res.has_solution:
            alpha = float(res.primal[built.alpha_col])
            units = np.round(res.primal[built.x_cols]).astype(int)
            z = tuple(int(round(res.primal[j])) for j in built.z_cols)
            gap_out = res.gap
        else:
            alpha, units, gap_out = math.nan, None, math.inf
        iterations = 1
        if log_path:
            Path(log_path).write_text(json.dumps({"iteration": 1, "objective": res.objective,
                                                  "bound": res.bound, "nodes": res.nodes,
                                                  "wall_s": res.wall_time}) + "\n")
    elif method == "oracle":
        best = brute_force_ccigd(problem, scenarios, lambda0, backend=backend)
        status = best.status
        alpha, units, z = best.alpha, best.units, best.z
        iterations = best.patterns
    else:
        raise ValueError(f"unknown method {method!r}")
    if units is None or not math.isfinite(alpha):
        return PlanSolution(name, status, math.nan, math.nan, None, lambda0, cap,
                            iterations=iterations, gap=math.inf if status == "limit" else gap_out,
                            wall_time=time.perf_counter() - t0, timings=timings)
    plan = InvestmentPlan.from_periods(problem, units)
    costs = _audit_costs(problem, scenarios, plan, alpha, backend)
    first = builders.first_stage_cost(problem, units)
    return PlanSolution(name, status, alpha, alpha, plan, lambda0, cap, first_stage_cost=first,
                        scenario_costs=costs, z=tuple(z), iterations=iterations, gap=gap_out,
                        wall_time=time.perf_counter() - t0, timings=timings)
