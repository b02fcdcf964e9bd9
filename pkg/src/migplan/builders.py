"""Assemble planning problems into StandardFormModel instances.

Column layout shared by every builder:

* ``X[k,p]`` integer units of DER ``k`` held during period ``p``; the yearly
  stock is ``X[k, period(t)]`` so investment only happens at period starts.
* ``alpha`` demand-growth horizon (IGD style models only).
* one operational block per scenario: ``P`` (RES/DFG output), ``Pch``,
  ``Pdis``, ``E``, ``E0`` (ESS) and ``Plc`` (curtailment) per cell.

Row counts, with ``C = T*D*H`` cells, ``n_r, n_g, n_s`` RES/DFG/ESS types,
``K`` DER types and ``P`` periods:

* investment block: ``K*(P-1)`` monotone rows, ``K*P`` install-limit rows
  when the limit applies per period, ``P`` annual-cap rows when the cap is
  finite, and ``3*T`` adequacy rows (capacity, DFG share, reserve).
* operational block: ``C*(2 + n_r + 2*n_g + 2*n_g*[H>1] + 5*n_s) + 3*n_s*T*D``.

See :func:`operational_row_count` and :func:`investment_row_count`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data_model import DerKind, InvestmentPlan, PlanningProblem, ValidationError
from .milp import EQ, GE, LE, ModelBuilder, StandardFormModel
from .scenarios import Scenario, ScenarioSet

LINEARIZATIONS = ("bigm", "mccormick")


@dataclass
class VariableIndex:
    """Maps ``(role, *subscripts)`` to a column number."""

    cols: dict[tuple, int] = field(default_factory=dict)

    def add(self, mb: ModelBuilder, role: str, *sub, **kw) -> int:
        key = (role, *sub)
        if key in self.cols:
            raise ValueError(f"duplicate variable {key}")
        name = role + ("[" + ",".join(map(str, sub)) + "]" if sub else "")
        j = mb.add_var(name, **kw)
        self.cols[key] = j
        return j

    def __getitem__(self, key) -> int:
        return self.cols[key if isinstance(key, tuple) else (key,)]

    def get(self, key, default=None):
        return self.cols.get(key if isinstance(key, tuple) else (key,), default)

    def role(self, role: str) -> dict[tuple, int]:
        return {k[1:]: v for k, v in self.cols.items() if k[0] == role}

    def __len__(self) -> int:
        return len(self.cols)


@dataclass(frozen=True, eq=False)
class BuiltModel:
    """A sealed model plus the index needed to read solutions back."""

    model: StandardFormModel
    index: VariableIndex
    x_cols: np.ndarray           # (K, P) column numbers of X
    alpha_col: int | None = None
    z_cols: tuple[int, ...] = ()

    def plan(self, problem: PlanningProblem, primal: np.ndarray) -> InvestmentPlan:
        return InvestmentPlan.from_periods(problem, np.round(primal[self.x_cols]))


# ---- closed-form sizes -------------------------------------------------------------

def investment_row_count(problem: PlanningProblem) -> int:
    K, P, T = problem.n_ders, problem.n_periods, problem.years
    n = K * (P - 1) + 3 * T
    if problem.install_limit_scope == "per_period":
        n += K * P
    if math.isfinite(problem.annual_invest_cap):
        n += P
    return n


def operational_row_count(problem: PlanningProblem) -> int:
    C = problem.years * problem.typical_days * problem.hours
    n_r = len(problem.ders(DerKind.RES))
    n_g = len(problem.ders(DerKind.DFG))
    n_s = len(problem.ders(DerKind.ESS))
    ramps = 2 * n_g if problem.hours > 1 else 0
    return C * (2 + n_r + 2 * n_g + ramps + 5 * n_s) + 3 * n_s * problem.years * problem.typical_days


def operational_column_count(problem: PlanningProblem) -> int:
    """Dispatch columns including the per-day ESS initial-energy columns."""
    from .data_model import operational_variable_count
    n_s = len(problem.ders(DerKind.ESS))
    return operational_variable_count(problem) + n_s * problem.years * problem.typical_days


# ---- cost coefficients --------------------------------------------------------------

def first_stage_costs(problem: PlanningProblem) -> np.ndarray:
    """Discounted cost per unit of ``X[k,p]``, shape ``(K, P)``.

    A unit held from period ``p`` is bought at the start of ``p``; when
    a later period keeps it, the next period's coefficient carries the
    negative difference, so the sum telescopes to the increment cost.
    """
    tau = problem.discount_factors()
    starts = problem.period_start_years()
    P = problem.n_periods
    pyear = problem.period_of_year()
    out = np.zeros((problem.n_ders, P))
    for k, der in enumerate(problem.catalog):
        once = der.unit_capital_cost + (0.0 if problem.om_on_cumulative else der.unit_om_cost)
        for p in range(P):
            nxt = tau[starts[p + 1]] if p + 1 < P else 0.0
            out[k, p] = once * (tau[starts[p]] - nxt)
            if problem.om_on_cumulative:
                out[k, p] += der.unit_om_cost * tau[pyear == p].sum()
    return out


def first_stage_cost(problem: PlanningProblem, period_units: np.ndarray) -> float:
    return float(np.sum(first_stage_costs(problem) * np.asarray(period_units, dtype=float)))


def first_stage_cost_bound(problem: PlanningProblem) -> float:
    """Upper bound on ``c.x`` over the box of admissible unit counts."""
    return float(np.sum(np.maximum(first_stage_costs(problem), 0.0) * problem.period_unit_bounds()))


def recourse_cost_bound(problem: PlanningProblem, load: np.ndarray) -> float:
    """Upper bound on any scenario's dispatch cost with ``alpha <= alpha_cap``.

    Curtailing all load while every admissible DFG idles at minimum output
    is always feasible, so its cost bounds the optimum.
    """
    tau = problem.discount_factors()
    scale = problem.day_scale
    max_units = problem.period_unit_bounds()[:, -1]
    idle = sum(der.fuel_cost * der.min_output * max_units[k]
               for k, der in enumerate(problem.catalog) if der.kind is DerKind.DFG)
    cells = problem.typical_days * problem.hours
    total = 0.0
    for t in range(problem.years):
        demand = (1.0 + problem.alpha_cap) * problem.demand_forecast[t] * float(np.sum(load[t]))
        total += tau[t] * scale * (problem.curtailment_penalty * demand + idle * cells)
    return total


# ---- investment block ------------------------------------------------------------------

def _add_investment(mb: ModelBuilder, idx: VariableIndex, problem: PlanningProblem,
                    demand: np.ndarray, alpha_col: int | None,
                    integer: bool = True) -> np.ndarray:
    K, P = problem.n_ders, problem.n_periods
    ub = problem.period_unit_bounds()
    costs = first_stage_costs(problem)
    xc = np.empty((K, P), dtype=int)
    for k, der in enumerate(problem.catalog):
        for p in range(P):
            xc[k, p] = idx.add(mb, "X", der.id, p + 1, upper=ub[k, p], integer=integer)
    for k, der in enumerate(problem.catalog):
        for p in range(1, P):
            mb.add_row(f"monotone[{der.id},{p + 1}]", {xc[k, p - 1]: 1.0, xc[k, p]: -1.0},
                       LE, 0.0, "monotone")
    if problem.install_limit_scope == "per_period":
        for k, der in enumerate(problem.catalog):
            for p in range(P):
                terms = {xc[k, p]: 1.0}
                if p:
                    terms[xc[k, p - 1]] = -1.0
                mb.add_row(f"install-limit[{der.id},{p + 1}]", terms, LE, der.install_limit,
                           "install-limit")
    if math.isfinite(problem.annual_invest_cap):
        for p in range(P):
            terms: dict[int, float] = {}
            for k, der in enumerate(problem.catalog):
                terms[xc[k, p]] = der.unit_capital_cost
                if p:
                    terms[xc[k, p - 1]] = -der.unit_capital_cost
            mb.add_row(f"annual-invest-cap[{p + 1}]", terms, LE, problem.annual_invest_cap,
                       "annual-invest-cap")
    pyear = problem.period_of_year()
    dfg = problem.ders(DerKind.DFG)
    for t in range(problem.years):
        p = pyear[t]
        terms = {xc[k, p]: der.rated_power for k, der in enumerate(problem.catalog)}
        if alpha_col is not None:
            terms[alpha_col] = -demand[t]
        mb.add_row(f"capacity-adequacy[{t + 1}]", terms, GE,
                   demand[t] + problem.long_term_reserve[t], "capacity-adequacy")
        terms = {xc[k, p]: problem.catalog[k].rated_power for k in dfg}
        if alpha_col is not None:
            terms[alpha_col] = -problem.dfg_min_ratio * demand[t]
        mb.add_row(f"dfg-minimum[{t + 1}]", terms, GE, problem.dfg_min_ratio * demand[t],
                   "dfg-minimum")
        terms = {xc[k, p]: problem.catalog[k].rated_power - problem.catalog[k].min_output
                 for k in dfg}
        mb.add_row(f"reserve-adequacy[{t + 1}]", terms, GE,
                   float(problem.short_term_reserve[t].max()), "reserve-adequacy")
    for k in range(K):
        for p in range(P):
            mb.add_obj(xc[k, p], costs[k, p])
    return xc


# ---- operational block --------------------------------------------------------------------

@dataclass
class _Block:
    cost: dict[int, float]
    balance_rows: list[int]


def _add_operations(mb: ModelBuilder, idx: VariableIndex, problem: PlanningProblem,
                    scenario: Scenario, demand: np.ndarray, xc: np.ndarray,
                    alpha_col: int | None, tag: tuple = (), in_objective: bool = True,
                    z_col: int | None = None, supply_relax: np.ndarray | None = None,
                    alpha_z_col: int | None = None) -> _Block:
    """Dispatch rows for one scenario.

    ``demand`` is the yearly base load; with ``alpha_col`` the balance rows
    carry ``(1 + alpha) * demand``. ``z_col`` with ``supply_relax`` relaxes
    the balance rows by ``supply_relax[t,d,h] * z`` (big-M form); adding
    ``alpha_z_col`` gives the exact product form instead.
    """
    T, D, H = problem.years, problem.typical_days, problem.hours
    tau = problem.discount_factors()
    scale = problem.day_scale
    pyear = problem.period_of_year()
    q = problem.curtailment_penalty
    cat = problem.catalog
    res, dfg, ess = problem.ders(DerKind.RES), problem.ders(DerKind.DFG), problem.ders(DerKind.ESS)
    load = scenario.load_factor
    avail = {k: scenario.availability(cat[k].resource) for k in res}
    sfx = ("," + ",".join(map(str, tag))) if tag else ""
    cost: dict[int, float] = {}
    balance_rows: list[int] = []

    def var(role, *sub, obj=0.0, lower=0.0, upper=math.inf):
        j = idx.add(mb, role, *tag, *sub, lower=lower, upper=upper)
        if obj:
            cost[j] = obj
            if in_objective:
                mb.add_obj(j, obj)
        return j

    for t in range(T):
        p = pyear[t]
        w = tau[t] * scale
        for d in range(D):
            gen = {k: [var("P", cat[k].id, t + 1, d + 1, h + 1,
                           obj=w * cat[k].fuel_cost if cat[k].kind is DerKind.DFG else 0.0)
                       for h in range(H)] for k in res + dfg}
            ch = {k: [var("Pch", cat[k].id, t + 1, d + 1, h + 1) for h in range(H)] for k in ess}
            dis = {k: [var("Pdis", cat[k].id, t + 1, d + 1, h + 1) for h in range(H)] for k in ess}
            en = {k: [var("E", cat[k].id, t + 1, d + 1, h + 1) for h in range(H)] for k in ess}
            e0 = {k: var("E0", cat[k].id, t + 1, d + 1) for k in ess}
            lc = [var("Plc", t + 1, d + 1, h + 1, obj=w * q) for h in range(H)]
            for h in range(H):
                cell = f"{t + 1},{d + 1},{h + 1}{sfx}"
                base = demand[t] * load[t, d, h]
                terms = {gen[k][h]: 1.0 for k in res + dfg}
                for k in ess:
                    terms[dis[k][h]] = 1.0
                    terms[ch[k][h]] = -1.0
                terms[lc[h]] = 1.0
                if alpha_col is not None:
                    terms[alpha_col] = -base
                if z_col is not None:
                    if alpha_z_col is not None:
                        terms[z_col] = base
                        terms[alpha_z_col] = base
                    else:
                        terms[z_col] = float(supply_relax[t, d, h])
                balance_rows.append(mb.add_row(f"power-balance[{cell}]", terms, GE, base,
                                               "power-balance"))
                for k in res:
                    mb.add_row(f"res-availability[{cat[k].id},{cell}]",
                               {gen[k][h]: 1.0, xc[k, p]: -cat[k].rated_power * avail[k][t, d, h]},
                               LE, 0.0, "res-availability")
                for k in dfg:
                    mb.add_row(f"dfg-min-output[{cat[k].id},{cell}]",
                               {gen[k][h]: 1.0, xc[k, p]: -cat[k].min_output}, GE, 0.0,
                               "dfg-min-output")
                    mb.add_row(f"dfg-max-output[{cat[k].id},{cell}]",
                               {gen[k][h]: 1.0, xc[k, p]: -cat[k].rated_power}, LE, 0.0,
                               "dfg-max-output")
                    if H > 1:
                        prev = gen[k][h - 1]  # h = 0 wraps to the last hour
                        mb.add_row(f"ramp-up[{cat[k].id},{cell}]", {gen[k][h]: 1.0, prev: -1.0},
                                   LE, cat[k].ramp_up, "ramp-up")
                        mb.add_row(f"ramp-down[{cat[k].id},{cell}]", {prev: 1.0, gen[k][h]: -1.0},
                                   LE, cat[k].ramp_down, "ramp-down")
                terms = {xc[k, p]: cat[k].rated_power for k in dfg}
                for k in dfg:
                    terms[gen[k][h]] = -1.0
                mb.add_row(f"short-term-reserve[{cell}]", terms, GE,
                           float(problem.short_term_reserve[t, d, h]), "short-term-reserve")
                for k in ess:
                    der = cat[k]
                    mb.add_row(f"ess-charge-limit[{der.id},{cell}]",
                               {ch[k][h]: 1.0, xc[k, p]: -der.rated_power}, LE, 0.0, "ess-charge-limit")
                    mb.add_row(f"ess-discharge-limit[{der.id},{cell}]",
                               {dis[k][h]: 1.0, xc[k, p]: -der.rated_power}, LE, 0.0,
                               "ess-discharge-limit")
                    mb.add_row(f"ess-energy-max[{der.id},{cell}]",
                               {en[k][h]: 1.0, xc[k, p]: -der.rated_energy}, LE, 0.0, "ess-energy-max")
                    mb.add_row(f"ess-energy-min[{der.id},{cell}]",
                               {en[k][h]: 1.0, xc[k, p]: -der.min_energy}, GE, 0.0, "ess-energy-min")
                    prev = en[k][h - 1] if h else e0[k]
                    mb.add_row(f"ess-energy-balance[{der.id},{cell}]",
                               {en[k][h]: 1.0, prev: -1.0, ch[k][h]: -der.efficiency,
                                dis[k][h]: 1.0 / der.efficiency}, EQ, 0.0, "ess-energy-balance")
            for k in ess:
                der = cat[k]
                day = f"{der.id},{t + 1},{d + 1}{sfx}"
                mb.add_row(f"ess-initial-max[{day}]", {e0[k]: 1.0, xc[k, p]: -der.rated_energy},
                           LE, 0.0, "ess-initial-max")
                mb.add_row(f"ess-initial-min[{day}]", {e0[k]: 1.0, xc[k, p]: -der.min_energy},
                           GE, 0.0, "ess-initial-min")
                mb.add_row(f"ess-cyclic[{day}]", {en[k][H - 1]: 1.0, e0[k]: -1.0}, EQ, 0.0,
                           "ess-cyclic")
    return _Block(cost, balance_rows)


def _check_profile(problem: PlanningProblem, scenario: Scenario) -> None:
    want = (problem.years, problem.typical_days, problem.hours)
    if scenario.load_factor.shape != want:
        raise ValidationError("profile", f"load factors cover {scenario.load_factor.shape}, need {want}")
    for r in problem.resources:
        a = scenario.availability(r)
        if a.shape != want:
            raise ValidationError("profile", f"availability for {r!r} covers {a.shape}, need {want}")


# ---- public builders -------------------------------------------------------------------------

def build_deterministic(problem: PlanningProblem, trajectory: np.ndarray,
                        profile: Scenario) -> BuiltModel:
    """Least-cost expansion plan for a fixed yearly demand ``trajectory``."""
    demand = np.asarray(trajectory, dtype=float)
    if demand.shape != (problem.years,):
        raise ValidationError("trajectory", f"expected {problem.years} yearly values")
    _check_profile(problem, profile)
    mb = ModelBuilder("deterministic")
    idx = VariableIndex()
    xc = _add_investment(mb, idx, problem, demand, None)
    _add_operations(mb, idx, problem, profile, demand, xc, None)
    return BuiltModel(mb.seal(), idx, xc)


def _budget_row(mb, name, xc, costs, block_cost, cap, extra=None) -> int:
    terms: dict[int, float] = {}
    for (k, p), j in np.ndenumerate(xc):
        terms[j] = costs[k, p]
    terms.update(block_cost)
    if extra:
        for j, v in extra.items():
            terms[j] = terms.get(j, 0.0) + v
    return mb.add_row(name, terms, LE, cap, "budget")


def build_ccigd_restricted(problem: PlanningProblem, scenarios: ScenarioSet | list[Scenario],
                           lambda0: float, name: str = "ccigd-restricted") -> BuiltModel:
    """Max ``alpha`` with every listed scenario fully enforced.

    This is the chance-constrained model after fixing which scenarios are
    discarded: dropped scenarios contribute no rows at all.
    """
    if not lambda0 > 0:
        raise ValidationError("lambda0", "risk-neutral budget must be > 0")
    scen = list(scenarios)
    mb = ModelBuilder(name, maximize=True)
    idx = VariableIndex()
    a = idx.add(mb, "alpha", upper=problem.alpha_cap, obj=1.0)
    xc = _add_investment(mb, idx, problem, problem.demand_forecast, a)
    costs = first_stage_costs(problem)
    for k in range(xc.shape[0]):
        for p in range(xc.shape[1]):
            mb.set_obj(xc[k, p], 0.0)
    cap = problem.budget_multiplier * lambda0
    for s in scen:
        _check_profile(problem, s)
        blk = _add_operations(mb, idx, problem, s, problem.demand_forecast, xc, a,
                              tag=(s.id,), in_objective=False)
        _budget_row(mb, f"budget[{s.id}]", xc, costs, blk.cost, cap)
    return BuiltModel(mb.seal(), idx, xc, alpha_col=a)


def build_igd(problem: PlanningProblem, lambda0: float, profile: Scenario) -> BuiltModel:
    """Single-level robustness model: demand fixed at ``(1 + alpha)`` times forecast."""
    return build_ccigd_restricted(problem, [profile], lambda0, name="igd")


def build_dispatch_lp(problem: PlanningProblem, plan: InvestmentPlan, scenario: Scenario,
                      alpha: float) -> BuiltModel:
    """Per-scenario dispatch LP at a fixed plan and horizon.

    ``X`` and ``alpha`` stay in the model as columns fixed by their bounds,
    so the same rows give cut coefficients through their duals.
    """
    plan.check(problem)
    template = dispatch_template(problem, scenario)
    return fix_dispatch(template, plan.period_units(problem), alpha)


def dispatch_template(problem: PlanningProblem, scenario: Scenario) -> BuiltModel:
    """Dispatch LP with ``X`` and ``alpha`` as free parameter columns."""
    _check_profile(problem, scenario)
    mb = ModelBuilder(f"dispatch[{scenario.id}]")
    idx = VariableIndex()
    a = idx.add(mb, "alpha", upper=problem.alpha_cap)
    xc = _add_investment_columns(mb, idx, problem)
    _add_operations(mb, idx, problem, scenario, problem.demand_forecast, xc, a)
    return BuiltModel(mb.seal(), idx, xc, alpha_col=a)


def _add_investment_columns(mb: ModelBuilder, idx: VariableIndex,
                            problem: PlanningProblem) -> np.ndarray:
    ub = problem.period_unit_bounds()
    xc = np.empty((problem.n_ders, problem.n_periods), dtype=int)
    for k, der in enumerate(problem.catalog):
        for p in range(problem.n_periods):
            xc[k, p] = idx.add(mb, "X", der.id, p + 1, upper=ub[k, p])
    return xc


def fix_dispatch(template: BuiltModel, period_units: np.ndarray, alpha: float) -> BuiltModel:
    m = template.model
    lo, up = m.lower.copy(), m.upper.copy()
    units = np.asarray(period_units, dtype=float)
    lo[template.x_cols], up[template.x_cols] = units, units
    lo[template.alpha_col] = up[template.alpha_col] = float(alpha)
    fixed = m.with_bounds(lo, up)
    return BuiltModel(fixed, template.index, template.x_cols, template.alpha_col)


def build_ccigd_monolithic(problem: PlanningProblem, scenarios: ScenarioSet, lambda0: float,
                           linearization: str = "bigm",
                           big_m: dict | None = None) -> BuiltModel:
    """All scenarios in one MILP with binary discard indicators ``z[n]``.

    ``big_m`` may override ``{"budget": [per scenario], "supply": [per
    scenario (T, D, H) arrays]}``; defaults are instance-derived.
    """
    if linearization not in LINEARIZATIONS:
        raise ValueError(f"linearization must be one of {LINEARIZATIONS}")
    if not lambda0 > 0:
        raise ValidationError("lambda0", "risk-neutral budget must be > 0")
    scenarios.check_compatible(problem)
    N = len(scenarios)
    cap = problem.budget_multiplier * lambda0
    cbar = first_stage_cost_bound(problem)
    phibar = [recourse_cost_bound(problem, scenarios.load[n]) for n in range(N)]
    m_bud = [max(cbar + phibar[n] - cap, 1.0) for n in range(N)]
    m_sup = [(1.0 + problem.alpha_cap) * problem.demand_forecast[:, None, None] * scenarios.load[n]
             for n in range(N)]
    if big_m:
        m_bud = list(big_m.get("budget", m_bud))
        m_sup = list(big_m.get("supply", m_sup))
        if any(not v > 0 for v in m_bud) or any(np.any(np.asarray(v) < 0) for v in m_sup):
            raise ValidationError("big_m", "big-M values must be positive")

    mb = ModelBuilder(f"ccigd-monolithic-{linearization}", maximize=True)
    idx = VariableIndex()
    a = idx.add(mb, "alpha", upper=problem.alpha_cap, obj=1.0)
    xc = _add_investment(mb, idx, problem, problem.demand_forecast, a)
    costs = first_stage_costs(problem)
    for (k, p), j in np.ndenumerate(xc):
        mb.set_obj(j, 0.0)
    zc = tuple(idx.add(mb, "z", n + 1, upper=1.0, integer=True) for n in range(N))
    _add_probability_budget(mb, zc, scenarios.probabilities, problem.risk_tolerance)
    ub = problem.period_unit_bounds()
    for n in range(N):
        s = scenarios[n]
        z = zc[n]
        if linearization == "bigm":
            blk = _add_operations(mb, idx, problem, s, problem.demand_forecast, xc, a, tag=(n + 1,),
                                  in_objective=False, z_col=z, supply_relax=m_sup[n])
            _budget_row(mb, f"budget[{n + 1}]", xc, costs, blk.cost, cap, {z: -m_bud[n]})
            continue
        az = idx.add(mb, "alpha_z", n + 1, upper=problem.alpha_cap)
        _add_mccormick(mb, az, a, z, problem.alpha_cap, f"alpha,{n + 1}")
        blk = _add_operations(mb, idx, problem, s, problem.demand_forecast, xc, a, tag=(n + 1,),
                              in_objective=False, z_col=z, alpha_z_col=az)
        # (c.x + d.y - cap)(1 - z) <= 0 with x*z replaced by xz and d.y*z bounded by phibar*z
        extra = {z: cap - phibar[n]}
        for (k, p), j in np.ndenumerate(xc):
            xz = idx.add(mb, "X_z", problem.catalog[k].id, p + 1, n + 1, upper=ub[k, p])
            _add_mccormick(mb, xz, j, z, ub[k, p], f"X,{problem.catalog[k].id},{p + 1},{n + 1}")
            extra[xz] = -costs[k, p]
        _budget_row(mb, f"budget[{n + 1}]", xc, costs, blk.cost, cap, extra)
    return BuiltModel(mb.seal(), idx, xc, alpha_col=a, z_cols=zc)


def _add_mccormick(mb: ModelBuilder, prod: int, x: int, z: int, xbar: float, label: str) -> None:
    """Exact linearization of ``prod = x * z`` for binary ``z`` and ``0 <= x <= xbar``."""
    mb.add_row(f"mccormick-ub-z[{label}]", {prod: 1.0, z: -xbar}, LE, 0.0, "mccormick")
    mb.add_row(f"mccormick-ub-x[{label}]", {prod: 1.0, x: -1.0}, LE, 0.0, "mccormick")
    mb.add_row(f"mccormick-lb[{label}]", {prod: 1.0, x: -1.0, z: -xbar}, GE, -xbar, "mccormick")


PROB_TOL = 1e-12


def admissible_count(probabilities: np.ndarray, epsilon: float) -> int | None:
    """Largest number of discardable scenarios when probabilities are uniform, else None."""
    pr = np.asarray(probabilities)
    if not np.all(pr == pr[0]):
        return None
    return int(math.floor(epsilon / pr[0] + PROB_TOL))


def _add_probability_budget(mb: ModelBuilder, zc, probabilities, epsilon: float) -> None:
    """``sum(pi * z) <= epsilon``; uniform weights use the equivalent count form."""
    count = admissible_count(probabilities, epsilon)
    if count is not None:
        mb.add_row("probability-budget", {z: 1.0 for z in zc}, LE, count, "probability-budget")
    else:
        scale = 1.0 / float(np.min(probabilities))
        mb.add_row("probability-budget",
                   {z: float(p) * scale for z, p in zip(zc, probabilities)}, LE,
                   epsilon * scale * (1 + PROB_TOL), "probability-budget")
