from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class Status(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    LIMIT = "iteration-limit"


def relative_gap(objective: float, bound: float) -> float:
    if not (math.isfinite(objective) and math.isfinite(bound)):
        return math.inf
    return abs(objective - bound) / max(1.0, abs(objective))


@dataclass(frozen=True, eq=False)
class SolveResult:
    """Outcome of an LP or MIP solve.

    ``duals`` are objective sensitivities to each row's right-hand side
    (pure LP solves only); ``reduced_costs`` are the matching sensitivities
    to the variable bounds.
    """

    status: Status
    objective: float = math.nan
    primal: np.ndarray | None = None
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    bound: float = math.nan
    gap: float = math.nan
    iterations: int = 0
    nodes: int = 0
    incumbent_log: tuple[float, ...] = field(default_factory=tuple)
    wall_time: float = 0.0
    backend: str = ""

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL

    @property
    def has_solution(self) -> bool:
        return self.primal is not None
