"""Domain types for multi-period microgrid expansion planning.

All powers are kW, energies kWh, money dollars. Years are 1-based in the
public API (``present_value_factor(problem, 1)`` is the first year) and
0-based inside arrays.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

SCHEMA_VERSION = 1
DAYS_PER_YEAR = 365.0


class ValidationError(ValueError):
    """Raised when input data violates a documented invariant."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


class DerKind(str, Enum):
    RES = "RES"
    DFG = "DFG"
    ESS = "ESS"


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class DerSpec:
    """One candidate distributed energy resource type."""

    id: str
    kind: DerKind
    rated_power: float
    install_limit: int
    capital_cost: float = 0.0   # $/kW, RES and DFG
    om_rate: float = 0.0        # $/kW/yr
    min_output: float = 0.0     # kW per unit, DFG
    fuel_cost: float | None = None  # $/kWh, DFG
    ramp_up: float | None = None    # kW/h, DFG (aggregate over installed units)
    ramp_down: float | None = None
    rated_energy: float = 0.0   # kWh per unit, ESS
    min_energy: float = 0.0
    power_cost: float = 0.0     # $/kW, ESS
    energy_cost: float = 0.0    # $/kWh, ESS
    efficiency: float = 1.0
    resource: str | None = None  # availability series a RES unit follows

    def __post_init__(self):
        object.__setattr__(self, "kind", DerKind(self.kind))
        f = f"catalog[{self.id}]"
        if not self.id:
            raise ValidationError("catalog.id", "empty DER id")
        if not self.rated_power > 0:
            raise ValidationError(f"{f}.rated_power", "must be > 0")
        if int(self.install_limit) != self.install_limit or self.install_limit < 1:
            raise ValidationError(f"{f}.install_limit", "must be an integer >= 1")
        object.__setattr__(self, "install_limit", int(self.install_limit))
        for name in ("capital_cost", "om_rate", "power_cost", "energy_cost"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{f}.{name}", "must be >= 0")
        if self.kind is DerKind.DFG:
            if not 0 <= self.min_output <= self.rated_power:
                raise ValidationError(f"{f}.min_output", "need 0 <= min_output <= rated_power")
            if self.fuel_cost is None or self.fuel_cost < 0:
                raise ValidationError(f"{f}.fuel_cost", "DFG needs fuel_cost >= 0")
            for name in ("ramp_up", "ramp_down"):
                v = getattr(self, name)
                if v is None or not v > 0:
                    raise ValidationError(f"{f}.{name}", "DFG needs a ramp rate > 0")
        elif self.kind is DerKind.ESS:
            if not 0 < self.efficiency <= 1:
                raise ValidationError(f"{f}.efficiency", "need 0 < efficiency <= 1")
            if not self.rated_energy > 0:
                raise ValidationError(f"{f}.rated_energy", "ESS needs rated_energy > 0")
            if not 0 <= self.min_energy <= self.rated_energy:
                raise ValidationError(f"{f}.min_energy", "need 0 <= min_energy <= rated_energy")
        else:
            if self.fuel_cost is not None:
                raise ValidationError(f"{f}.fuel_cost", "RES must not carry a fuel cost")
            if self.min_output != 0:
                raise ValidationError(f"{f}.min_output", "RES min_output must be 0")
            if not self.resource:
                object.__setattr__(self, "resource", self.id)

    @property
    def unit_capital_cost(self) -> float:
        """Investment cost of one installed unit."""
        if self.kind is DerKind.ESS:
            return self.power_cost * self.rated_power + self.energy_cost * self.rated_energy
        return self.capital_cost * self.rated_power

    @property
    def unit_om_cost(self) -> float:
        return self.om_rate * self.rated_power

    def to_dict(self) -> dict:
        d: dict[str, Any] = {
            "id": self.id,
            "kind": self.kind.value,
            "rated_power": self.rated_power,
            "install_limit": self.install_limit,
            "om_rate": self.om_rate,
        }
        if self.kind is DerKind.ESS:
            d.update(rated_energy=self.rated_energy, min_energy=self.min_energy,
                     power_cost=self.power_cost, energy_cost=self.energy_cost,
                     efficiency=self.efficiency)
        else:
            d["capital_cost"] = self.capital_cost
        if self.kind is DerKind.DFG:
            d.update(min_output=self.min_output, fuel_cost=self.fuel_cost,
                     ramp_up=self.ramp_up, ramp_down=self.ramp_down)
        if self.kind is DerKind.RES:
            d["resource"] = self.resource
        return d


@dataclass(frozen=True, eq=False)
class PlanningProblem:
    """Horizon, economics, demand, reserves and the DER catalog.

    ``periods`` holds inclusive, 1-based year ranges. Investment decisions
    are made per period and held constant across its years.
    ``install_limit_scope`` selects whether ``install_limit`` bounds the
    cumulative stock (``"cumulative"``) or each period's additions
    (``"per_period"``).
    """

    years: int
    periods: tuple[tuple[int, int], ...]
    typical_days: int
    hours: int
    discount_rate: float
    demand_forecast: np.ndarray
    long_term_reserve: np.ndarray
    short_term_reserve: np.ndarray
    annual_invest_cap: float
    curtailment_penalty: float
    dfg_min_ratio: float
    deviation_factor: float
    risk_tolerance: float
    catalog: tuple[DerSpec, ...]
    om_on_cumulative: bool = False
    alpha_cap: float = 1.0
    install_limit_scope: str = "cumulative"
    name: str = "problem"

    def __post_init__(self):
        T, D, H = self.years, self.typical_days, self.hours
        if int(T) != T or T < 1:
            raise ValidationError("horizon.years", "must be an integer >= 1")
        if int(D) != D or D < 1:
            raise ValidationError("horizon.typical_days", "must be an integer >= 1")
        if int(H) != H or H < 1:
            raise ValidationError("horizon.hours", "must be an integer >= 1")
        periods = tuple((int(a), int(b)) for a, b in self.periods)
        expected = 1
        for a, b in periods:
            if a != expected or b < a:
                raise ValidationError(
                    "horizon.periods",
                    "periods must partition 1..T into contiguous, nonempty, increasing ranges")
            expected = b + 1
        if expected != T + 1 or not periods:
            raise ValidationError("horizon.periods", f"periods must cover years 1..{T}")
        object.__setattr__(self, "periods", periods)

        demand = _frozen_array(self.demand_forecast)
        if demand.shape != (T,):
            raise ValidationError("policy.demand_forecast", f"expected {T} yearly values")
        ltr = _frozen_array(self.long_term_reserve)
        if ltr.shape != (T,):
            raise ValidationError("policy.long_term_reserve", f"expected {T} yearly values")
        strv = _frozen_array(self.short_term_reserve)
        if strv.shape != (T, D, H):
            raise ValidationError("policy.short_term_reserve", f"expected shape {(T, D, H)}")
        for name, arr in (("policy.demand_forecast", demand),
                          ("policy.long_term_reserve", ltr),
                          ("policy.short_term_reserve", strv)):
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ValidationError(name, "values must be finite and >= 0")
        object.__setattr__(self, "demand_forecast", demand)
        object.__setattr__(self, "long_term_reserve", ltr)
        object.__setattr__(self, "short_term_reserve", strv)

        if not self.discount_rate >= 0:
            raise ValidationError("economics.discount_rate", "must be >= 0")
        if not self.curtailment_penalty >= 0:
            raise ValidationError("economics.curtailment_penalty", "must be >= 0")
        if not self.annual_invest_cap >= 0:
            raise ValidationError("economics.annual_invest_cap", "must be >= 0")
        if not 0 <= self.dfg_min_ratio <= 1:
            raise ValidationError("policy.dfg_min_ratio", "need 0 <= omega <= 1")
        if not self.deviation_factor >= 0:
            raise ValidationError("policy.deviation_factor", "need sigma >= 0")
        if not 0 <= self.risk_tolerance < 1:
            raise ValidationError("policy.risk_tolerance", "need 0 <= epsilon < 1")
        if not self.alpha_cap > 0:
            raise ValidationError("policy.alpha_cap", "must be > 0")
        if self.install_limit_scope not in ("cumulative", "per_period"):
            raise ValidationError("policy.install_limit_scope",
                                  "must be 'cumulative' or 'per_period'")
        catalog = tuple(self.catalog)
        if not catalog:
            raise ValidationError("catalog", "at least one DER is required")
        ids = [d.id for d in catalog]
        if len(set(ids)) != len(ids):
            raise ValidationError("catalog", "DER ids must be unique")
        object.__setattr__(self, "catalog", catalog)

    # ---- derived quantities -------------------------------------------------
    @property
    def n_periods(self) -> int:
        return len(self.periods)

    @property
    def n_ders(self) -> int:
        return len(self.catalog)

    @property
    def day_scale(self) -> float:
        """Typical-day to year scaling, 365/D."""
        return DAYS_PER_YEAR / self.typical_days

    @property
    def budget_multiplier(self) -> float:
        return 1.0 + self.deviation_factor

    def period_of_year(self) -> np.ndarray:
        """0-based period index for each 0-based year."""
        out = np.empty(self.years, dtype=int)
        for p, (a, b) in enumerate(self.periods):
            out[a - 1:b] = p
        return out

    def period_start_years(self) -> list[int]:
        """0-based first year of each period."""
        return [a - 1 for a, _ in self.periods]

    def discount_factors(self) -> np.ndarray:
        t = np.arange(1, self.years + 1, dtype=float)
        return (1.0 + self.discount_rate) ** (-t)

    def ders(self, *kinds: DerKind | str) -> list[int]:
        wanted = {DerKind(k) for k in kinds}
        return [i for i, d in enumerate(self.catalog) if d.kind in wanted]

    def der_position(self, der_id: str) -> int:
        for i, d in enumerate(self.catalog):
            if d.id == der_id:
                return i
        raise KeyError(der_id)

    @property
    def resources(self) -> list[str]:
        """Distinct availability series referenced by RES units, in catalog order."""
        seen: list[str] = []
        for d in self.catalog:
            if d.kind is DerKind.RES and d.resource not in seen:
                seen.append(d.resource)
        return seen

    def period_unit_bounds(self) -> np.ndarray:
        """Upper bound on cumulative units per (DER, period)."""
        lim = np.array([d.install_limit for d in self.catalog], dtype=float)
        if self.install_limit_scope == "cumulative":
            return np.repeat(lim[:, None], self.n_periods, axis=1)
        return lim[:, None] * np.arange(1, self.n_periods + 1)[None, :]

    def with_overrides(self, **changes) -> "PlanningProblem":
        """Copy with fields replaced; the copy is re-validated."""
        return replace(self, **changes)


def present_value_factor(problem: PlanningProblem, year: int) -> float:
    """``(1 + r) ** -year`` for a 1-based year in ``1..T``."""
    if not 1 <= year <= problem.years:
        raise ValueError(f"year {year} outside 1..{problem.years}")
    return (1.0 + problem.discount_rate) ** (-year)


def operational_variable_count(problem: PlanningProblem) -> int:
    """Dispatch columns implied by the catalog, excluding ESS initial-energy columns."""
    cells = problem.years * problem.typical_days * problem.hours
    n_gen = len(problem.ders(DerKind.RES, DerKind.DFG))
    n_ess = len(problem.ders(DerKind.ESS))
    return n_gen * cells + 3 * n_ess * cells + cells


# ---- demand envelope ----------------------------------------------------------

ENVELOPE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class EnvelopeBound:
    """Symmetric fractional envelope of width ``horizon`` around a forecast."""

    horizon: float
    forecast: np.ndarray

    def __post_init__(self):
        if not self.horizon >= 0:
            raise ValidationError("horizon", "must be >= 0")
        fc = _frozen_array(self.forecast)
        if fc.ndim != 1:
            raise ValidationError("forecast", "must be a 1-D yearly trajectory")
        object.__setattr__(self, "forecast", fc)


def envelope_contains(bound: EnvelopeBound, trajectory: Sequence[float]) -> bool:
    traj = np.asarray(trajectory, dtype=float)
    if traj.shape != bound.forecast.shape:
        raise ValueError(f"trajectory has {traj.size} entries, forecast has {bound.forecast.size}")
    if np.any(bound.forecast <= 0):
        raise ValueError("forecast entries must be strictly positive")
    dev = np.abs(traj - bound.forecast) / bound.forecast
    # relative slack absorbs rounding in products like 1.1 * 450
    return bool(np.all(dev <= bound.horizon * (1 + ENVELOPE_RTOL) + ENVELOPE_RTOL))


def worst_case_trajectory(bound: EnvelopeBound) -> np.ndarray:
    return (1.0 + bound.horizon) * bound.forecast


# ---- investment plans ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class InvestmentPlan:
    """Cumulative installed units per (DER, year)."""

    der_ids: tuple[str, ...]
    units: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.units)
        if u.ndim != 2 or u.shape[0] != len(self.der_ids):
            raise ValidationError("units", "expected shape (n_ders, years)")
        if np.any(np.abs(u - np.round(u)) > 1e-6):
            raise ValidationError("units", "unit counts must be integers")
        u = np.round(u).astype(int)
        if np.any(u < 0):
            raise ValidationError("units", "unit counts must be >= 0")
        u.setflags(write=False)
        object.__setattr__(self, "units", u)
        object.__setattr__(self, "der_ids", tuple(self.der_ids))

    @classmethod
    def from_periods(cls, problem: PlanningProblem, period_units) -> "InvestmentPlan":
        pu = np.asarray(period_units, dtype=float).reshape(problem.n_ders, problem.n_periods)
        yearly = pu[:, problem.period_of_year()]
        return cls(tuple(d.id for d in problem.catalog), yearly)

    def period_units(self, problem: PlanningProblem) -> np.ndarray:
        return self.units[:, problem.period_start_years()]

    def additions(self) -> np.ndarray:
        """Per-year additions ``X^t - X^(t-1)`` with zero initial stock."""
        prev = np.concatenate([np.zeros((self.units.shape[0], 1), dtype=int), self.units[:, :-1]], axis=1)
        return self.units - prev

    def check(self, problem: PlanningProblem) -> None:
        """Raise ValidationError unless monotone, bounded and period-constant."""
        if self.der_ids != tuple(d.id for d in problem.catalog):
            raise ValidationError("plan.der_ids", "plan does not match the problem catalog")
        if self.units.shape[1] != problem.years:
            raise ValidationError("plan.units", f"expected {problem.years} years")
        if np.any(self.additions() < 0):
            raise ValidationError("plan.units", "installed units must be nondecreasing over years")
        pu = self.period_units(problem)
        if np.any(pu[:, problem.period_of_year()] != self.units):
            raise ValidationError("plan.units", "units must be constant within each period")
        if problem.install_limit_scope == "cumulative":
            excess = self.units > np.array([d.install_limit for d in problem.catalog])[:, None]
        else:
            excess = self.additions() > np.array([d.install_limit for d in problem.catalog])[:, None]
        if np.any(excess):
            k = int(np.argwhere(excess)[0][0])
            raise ValidationError("plan.units", f"install_limit exceeded for {self.der_ids[k]}")

    def to_dict(self, problem: PlanningProblem | None = None) -> dict:
        d = {"der_ids": list(self.der_ids), "units_by_year": self.units.tolist()}
        if problem is not None:
            d["units_by_period"] = self.period_units(problem).tolist()
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "InvestmentPlan":
        return cls(tuple(d["der_ids"]), np.array(d["units_by_year"]))


# ---- file ingestion -------------------------------------------------------------

def _yearly(spec, T: int, base: np.ndarray | None, field_name: str) -> np.ndarray:
    if isinstance(spec, Mapping):
        if "fraction_of_forecast" in spec:
            if base is None:
                raise ValidationError(field_name, "fraction_of_forecast needs a demand forecast")
            return float(spec["fraction_of_forecast"]) * base
        if "initial" in spec:
            g = float(spec.get("growth", 0.0))
            return float(spec["initial"]) * (1.0 + g) ** np.arange(T)
        raise ValidationError(field_name, f"unrecognised specification {sorted(spec)}")
    if np.isscalar(spec):
        return np.full(T, float(spec))
    arr = np.asarray(spec, dtype=float)
    if arr.shape != (T,):
        raise ValidationError(field_name, f"expected {T} yearly values")
    return arr


def problem_from_dict(doc: Mapping) -> PlanningProblem:
    try:
        version = doc.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ValidationError("schema_version", f"unsupported version {version}")
        for key in ("horizon", "economics", "policy", "catalog"):
            if key not in doc:
                raise ValidationError(key, "missing top-level key")
        hz, econ, pol = doc["horizon"], doc["economics"], doc["policy"]
        T = int(hz["years"])
        D = int(hz.get("typical_days", 1))
        H = int(hz.get("hours", 24))
        periods = hz.get("periods") or [[t, t] for t in range(1, T + 1)]
        demand = _yearly(pol["demand_forecast"], T, None, "policy.demand_forecast")
        ltr = _yearly(pol.get("long_term_reserve", 0.0), T, demand, "policy.long_term_reserve")
        st = pol.get("short_term_reserve", 0.0)
        if isinstance(st, Mapping) and "fraction_of_forecast" in st:
            strv = np.repeat(float(st["fraction_of_forecast"]) * demand, D * H).reshape(T, D, H)
        elif np.isscalar(st):
            strv = np.full((T, D, H), float(st))
        else:
            strv = np.asarray(st, dtype=float)
            if strv.shape == (T,):
                strv = np.repeat(strv, D * H).reshape(T, D, H)
        cap = econ.get("annual_invest_cap")
        catalog = []
        for i, entry in enumerate(doc["catalog"]):
            if "id" not in entry or "kind" not in entry:
                raise ValidationError(f"catalog[{i}]", "each DER needs 'id' and 'kind'")
            try:
                kind = DerKind(entry["kind"])
            except ValueError:
                raise ValidationError(f"catalog[{entry['id']}].kind",
                                      "must be one of RES, DFG, ESS") from None
            fields = {k: v for k, v in entry.items() if k != "kind"}
            try:
                catalog.append(DerSpec(kind=kind, **fields))
            except TypeError as exc:
                raise ValidationError(f"catalog[{entry['id']}]", str(exc)) from None
        return PlanningProblem(
            name=str(doc.get("name", "problem")),
            years=T,
            periods=tuple(tuple(p) for p in periods),
            typical_days=D,
            hours=H,
            discount_rate=float(econ.get("discount_rate", 0.0)),
            demand_forecast=demand,
            long_term_reserve=ltr,
            short_term_reserve=strv,
            annual_invest_cap=math.inf if cap is None else float(cap),
            curtailment_penalty=float(econ["curtailment_penalty"]),
            om_on_cumulative=bool(econ.get("om_on_cumulative", False)),
            dfg_min_ratio=float(pol.get("dfg_min_ratio", 0.0)),
            deviation_factor=float(pol.get("deviation_factor", 0.0)),
            risk_tolerance=float(pol.get("risk_tolerance", 0.0)),
            alpha_cap=float(pol.get("alpha_cap", 1.0)),
            install_limit_scope=str(pol.get("install_limit_scope", "cumulative")),
            catalog=tuple(catalog),
        )
    except KeyError as exc:
        raise ValidationError(str(exc.args[0]), "required field missing") from None


def problem_to_dict(problem: PlanningProblem) -> dict:
    cap = problem.annual_invest_cap
    return {
        "schema_version": SCHEMA_VERSION,
        "name": problem.name,
        "horizon": {
            "years": problem.years,
            "periods": [list(p) for p in problem.periods],
            "typical_days": problem.typical_days,
            "hours": problem.hours,
        },
        "economics": {
            "discount_rate": problem.discount_rate,
            "annual_invest_cap": None if math.isinf(cap) else cap,
            "curtailment_penalty": problem.curtailment_penalty,
            "om_on_cumulative": problem.om_on_cumulative,
        },
        "policy": {
            "demand_forecast": problem.demand_forecast.tolist(),
            "long_term_reserve": problem.long_term_reserve.tolist(),
            "short_term_reserve": problem.short_term_reserve.tolist(),
            "dfg_min_ratio": problem.dfg_min_ratio,
            "deviation_factor": problem.deviation_factor,
            "risk_tolerance": problem.risk_tolerance,
            "alpha_cap": problem.alpha_cap,
            "install_limit_scope": problem.install_limit_scope,
        },
        "catalog": [d.to_dict() for d in problem.catalog],
    }


def load_problem(path: str | Path) -> PlanningProblem:
    """Read and validate a problem JSON file."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(str(path), f"malformed JSON ({exc})") from None
    if not isinstance(doc, Mapping):
        raise ValidationError(str(path), "top level must be a JSON object")
    return problem_from_dict(doc)


def save_problem(problem: PlanningProblem, path: str | Path) -> None:
    Path(path).write_text(json.dumps(problem_to_dict(problem), indent=2))
