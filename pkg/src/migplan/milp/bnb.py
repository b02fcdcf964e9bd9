"""Best-first branch and bound over the dense simplex."""
from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .simplex import simplex_solve

INT_TOL = 1e-6


@dataclass
class BnBOutcome:
    status: str  # optimal | infeasible | unbounded | iteration-limit
    x: np.ndarray | None = None
    objective: float = math.inf
    bound: float = -math.inf
    nodes: int = 0
    incumbent_log: list[float] = field(default_factory=list)


def _most_fractional(x: np.ndarray, integer: np.ndarray) -> int | None:
    idx = np.flatnonzero(integer)
    if idx.size == 0:
        return None
    frac = x[idx] - np.floor(x[idx])
    score = np.minimum(frac, 1.0 - frac)
    k = int(np.argmax(score))
    if score[k] <= INT_TOL:
        return None
    return int(idx[k])


def branch_and_bound(c, A, sense, b, lower, upper, integer, gap_tol: float = 1e-9,
                     time_limit: float | None = None, node_limit: int = 1_000_000) -> BnBOutcome:
    """Minimise ``c.x`` over the mixed-integer set; objective excludes any offset."""
    t0 = time.perf_counter()
    integer = np.asarray(integer, dtype=bool)
    counter = itertools.count()
    heap: list = []
    out = BnBOutcome("infeasible")
    incumbent = math.inf

    def prune_level() -> float:
        return incumbent - gap_tol * max(1.0, abs(incumbent))

    def visit(lo, hi) -> str:
        nonlocal incumbent
        res = simplex_solve(c, A, sense, b, lo, hi)
        out.nodes += 1
        if res.status != "optimal":
            return res.status
        if math.isfinite(incumbent) and res.objective >= prune_level():
            return "pruned"
        j = _most_fractional(res.x, integer)
        if j is None:
            x = res.x.copy()
            x[integer] = np.round(x[integer])
            incumbent = float(c @ x)
            out.x = x
            out.incumbent_log.append(incumbent)
            return "integral"
        heapq.heappush(heap, (res.objective, next(counter), lo, hi, res.x, j))
        return "branched"

    root = visit(np.asarray(lower, float).copy(), np.asarray(upper, float).copy())
    if root in ("unbounded", "iteration-limit"):
        out.status = root
        return out
    final_bound = math.inf
    while heap:
        bound, _, lo, hi, x, j = heapq.heappop(heap)
        if math.isfinite(incumbent) and bound >= prune_level():
            final_bound = bound
            heap.clear()
            break
        if (time_limit is not None and time.perf_counter() - t0 > time_limit) or out.nodes >= node_limit:
            heapq.heappush(heap, (bound, next(counter), lo, hi, x, j))
            out.status = "iteration-limit"
            out.objective = incumbent
            out.bound = heap[0][0]
            return out
        v = x[j]
        hi_down = hi.copy()
        hi_down[j] = math.floor(v)
        lo_up = lo.copy()
        lo_up[j] = math.ceil(v)
        if hi_down[j] >= lo[j]:
            visit(lo, hi_down)
        if lo_up[j] <= hi[j]:
            visit(lo_up, hi)
    if math.isfinite(incumbent):
        out.status = "optimal"
        out.objective = incumbent
        out.bound = min(incumbent, final_bound)
    return out
