"""Small synthetic instances used by tests, examples and the `compare` command."""
from __future__ import annotations

import math

import numpy as np

from .data_model import DerSpec, PlanningProblem
from .scenarios import ProfileSpec, ScenarioSet, default_profile, generate

TINY_COUNT = 6


def _catalog(variant: int) -> tuple[DerSpec, ...]:
    wt = DerSpec("WT", "RES", 60, 6, capital_cost=1100, om_rate=40, resource="wind")
    pv = DerSpec("PV", "RES", 40, 6, capital_cost=900, om_rate=20, resource="solar")
    de = DerSpec("DE", "DFG", 50, 6, capital_cost=300, om_rate=30, min_output=10,
                 fuel_cost=0.25, ramp_up=150, ramp_down=150)
    fc = DerSpec("FC", "DFG", 40, 6, capital_cost=600, om_rate=25, min_output=4,
                 fuel_cost=0.12, ramp_up=20, ramp_down=20)
    es = DerSpec("ES", "ESS", 30, 4, power_cost=250, energy_cost=150, om_rate=10,
                 rated_energy=60, min_energy=6, efficiency=0.92)
    mixes = [(wt, de, es), (pv, de, es), (wt, pv, de), (wt, de), (wt, pv, de, es), (pv, fc, de)]
    return mixes[variant % len(mixes)]


def tiny_problem(variant: int = 0, sigma: float = 0.3, epsilon: float = 0.25) -> PlanningProblem:
    """One of a family of small instances (T <= 3, D = 1, H <= 6, at most 4 DER types)."""
    T = (2, 3, 3, 1, 3, 2)[variant % TINY_COUNT]
    H = (4, 6, 5, 6, 4, 6)[variant % TINY_COUNT]
    periods = ((1, 1), (2, T)) if T > 1 else ((1, 1),)
    demand = 100.0 * 1.08 ** np.arange(T)
    return PlanningProblem(
        name=f"tiny-{variant}", years=T, periods=periods, typical_days=1, hours=H,
        discount_rate=0.04, demand_forecast=demand, long_term_reserve=0.1 * demand,
        short_term_reserve=np.repeat(0.1 * demand, H).reshape(T, 1, H),
        annual_invest_cap=math.inf, curtailment_penalty=0.6, dfg_min_ratio=0.2,
        deviation_factor=sigma, risk_tolerance=epsilon, catalog=_catalog(variant))


def tiny_profile(problem: PlanningProblem, load_std: float = 0.2) -> ProfileSpec:
    return default_profile(problem.typical_days, problem.hours, load_std=load_std)


def tiny_scenarios(problem: PlanningProblem, count: int = 4, seed: int = 11) -> ScenarioSet:
    return generate(tiny_profile(problem), problem, count, seed)
