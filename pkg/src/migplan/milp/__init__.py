"""Solver-neutral MILP layer.

Models are assembled with :class:`ModelBuilder` and solved by a named
backend. ``external:highs`` is the default; ``internal`` runs the bundled
dense simplex and branch and bound. The default can be changed with
:func:`set_default_backend` or the ``MIGPLAN_SOLVER_BACKEND`` environment
variable.
"""
from __future__ import annotations

import math
import os
import time
from typing import Callable, Protocol

import numpy as np

from .bnb import branch_and_bound
from .model import EQ, GE, LE, ModelBuilder, StandardFormModel, from_arrays, write_lp
from .result import SolveResult, Status, relative_gap
from .simplex import simplex_solve

__all__ = [
    "EQ", "GE", "LE", "ModelBuilder", "StandardFormModel", "from_arrays", "write_lp",
    "SolveResult", "Status", "relative_gap", "solve_lp", "solve_mip",
    "register_backend", "available_backends", "set_default_backend", "default_backend",
]

ENV_BACKEND = "MIGPLAN_SOLVER_BACKEND"
DEFAULT_GAP = 1e-6


class Backend(Protocol):
    name: str

    def solve_lp(self, model: StandardFormModel) -> SolveResult: ...

    def solve_mip(self, model: StandardFormModel, gap_tol: float,
                  time_limit: float | None) -> SolveResult: ...


_STATUS = {"optimal": Status.OPTIMAL, "infeasible": Status.INFEASIBLE,
           "unbounded": Status.UNBOUNDED, "iteration-limit": Status.LIMIT}


class InternalBackend:
    name = "internal"

    @staticmethod
    def _arrays(model: StandardFormModel):
        sign = -1.0 if model.maximize else 1.0
        return (sign * model.objective, model.A.toarray(), model.sense, model.rhs,
                model.lower, model.upper, sign)

    def solve_lp(self, model: StandardFormModel) -> SolveResult:
        t0 = time.perf_counter()
        c, A, sense, b, lo, hi, sign = self._arrays(model)
        res = simplex_solve(c, A, sense, b, lo, hi)
        wall = time.perf_counter() - t0
        status = _STATUS[res.status]
        if status is not Status.OPTIMAL:
            return SolveResult(status, iterations=res.iterations, wall_time=wall, backend=self.name)
        obj = model.evaluate(res.x)
        return SolveResult(Status.OPTIMAL, objective=obj, primal=res.x, duals=sign * res.y,
                           reduced_costs=sign * res.d, bound=obj, gap=0.0,
                           iterations=res.iterations, wall_time=wall, backend=self.name)

    def solve_mip(self, model: StandardFormModel, gap_tol: float,
                  time_limit: float | None) -> SolveResult:
        t0 = time.perf_counter()
        c, A, sense, b, lo, hi, sign = self._arrays(model)
        out = branch_and_bound(c, A, sense, b, lo, hi, model.integer, gap_tol=gap_tol,
                               time_limit=time_limit)
        wall = time.perf_counter() - t0
        status = _STATUS[out.status]
        log = tuple(sign * v + model.offset for v in out.incumbent_log)
        if out.x is None:
            if status is Status.OPTIMAL:
                status = Status.INFEASIBLE
            bound = sign * out.bound + model.offset if status is Status.LIMIT else math.nan
            return SolveResult(status, bound=bound, gap=math.inf if status is Status.LIMIT else math.nan,
                               nodes=out.nodes, incumbent_log=log, wall_time=wall,
                               backend=self.name)
        obj = model.evaluate(out.x)
        bound = sign * out.bound + model.offset
        return SolveResult(status, objective=obj, primal=out.x, bound=bound,
                           gap=relative_gap(obj, bound), nodes=out.nodes,
                           incumbent_log=log, wall_time=wall, backend=self.name)


def _highs() -> Backend:
    from .highs import HighsBackend
    return HighsBackend()


_REGISTRY: dict[str, Callable[[], Backend]] = {
    "internal": InternalBackend,
    "external:highs": _highs,
}
_ALIASES = {"highs": "external:highs"}
_default: str | None = None
_instances: dict[str, Backend] = {}


def register_backend(name: str, factory: Callable[[], Backend]) -> None:
    _REGISTRY[name] = factory
    _instances.pop(name, None)


def available_backends() -> list[str]:
    return sorted(_REGISTRY)


def set_default_backend(name: str | None) -> None:
    global _default
    if name is not None:
        _resolve_name(name)
    _default = name


def default_backend() -> str:
    return _resolve_name(_default or os.environ.get(ENV_BACKEND) or "external:highs")


def _resolve_name(name: str) -> str:
    name = _ALIASES.get(name, name)
    if name not in _REGISTRY:
        raise ValueError(f"unknown solver backend {name!r}; choose from {available_backends()}")
    return name


def get_backend(name: str | None = None) -> Backend:
    key = _resolve_name(name) if name else default_backend()
    if key not in _instances:
        _instances[key] = _REGISTRY[key]()
    return _instances[key]


def _round_integers(model: StandardFormModel, res: SolveResult) -> SolveResult:
    if res.primal is None or not model.is_mip:
        return res
    x = res.primal.copy()
    x[model.integer] = np.round(x[model.integer]) + 0.0
    obj = model.evaluate(x)
    gap = relative_gap(obj, res.bound) if math.isfinite(res.bound) else res.gap
    return SolveResult(res.status, objective=obj, primal=x, duals=None, reduced_costs=None,
                       bound=res.bound, gap=gap, iterations=res.iterations, nodes=res.nodes,
                       incumbent_log=res.incumbent_log, wall_time=res.wall_time,
                       backend=res.backend)


def solve_lp(model: StandardFormModel, backend: str | None = None) -> SolveResult:
    """Solve a model with no integer columns, returning primal values and duals."""
    if model.is_mip:
        raise ValueError(f"model {model.name!r} has integer columns; use solve_mip or relaxed()")
    return get_backend(backend).solve_lp(model)


def solve_mip(model: StandardFormModel, gap_tol: float = DEFAULT_GAP,
              time_limit: float | None = None, backend: str | None = None) -> SolveResult:
    """Solve to relative gap ``|obj - bound| / max(1, |obj|) <= gap_tol`` or the time limit."""
    res = get_backend(backend).solve_mip(model, gap_tol, time_limit)
    return _round_integers(model, res)
