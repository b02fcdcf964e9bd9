"""HiGHS backend (``external:highs``) through the highspy bindings."""
from __future__ import annotations

import math
import time

import highspy
import numpy as np

from .model import EQ, GE, LE, StandardFormModel
from .result import SolveResult, Status, relative_gap

_MS = highspy.HighsModelStatus


class HighsBackend:
    name = "external:highs"

    def __init__(self, primal_tol: float = 1e-7, dual_tol: float = 1e-7,
                 mip_feasibility_tol: float = 1e-6, seed: int = 0):
        self.options = {
            "output_flag": False,
            "primal_feasibility_tolerance": primal_tol,
            "dual_feasibility_tolerance": dual_tol,
            "mip_feasibility_tolerance": mip_feasibility_tol,
            "random_seed": seed,
        }

    def _load(self, model: StandardFormModel, integer: bool) -> highspy.Highs:
        h = highspy.Highs()
        for k, v in self.options.items():
            h.setOptionValue(k, v)
        sign = -1.0 if model.maximize else 1.0
        lp = highspy.HighsLp()
        lp.num_col_ = model.n_vars
        lp.num_row_ = model.n_rows
        lp.col_cost_ = sign * model.objective
        lp.offset_ = sign * model.offset
        lp.col_lower_ = np.asarray(model.lower, dtype=float)
        lp.col_upper_ = np.asarray(model.upper, dtype=float)
        rhs = model.rhs
        lp.row_lower_ = np.where(model.sense == LE, -math.inf, rhs)
        lp.row_upper_ = np.where(model.sense == GE, math.inf, rhs)
        A = model.A.tocsc()
        A.sort_indices()
        lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        lp.a_matrix_.start_ = A.indptr.astype(np.int32)
        lp.a_matrix_.index_ = A.indices.astype(np.int32)
        lp.a_matrix_.value_ = A.data.astype(float)
        lp.a_matrix_.num_col_ = model.n_vars
        lp.a_matrix_.num_row_ = model.n_rows
        if integer and model.is_mip:
            kint, kcont = highspy.HighsVarType.kInteger, highspy.HighsVarType.kContinuous
            lp.integrality_ = [kint if f else kcont for f in model.integer]
        h.passModel(lp)
        return h

    def solve_lp(self, model: StandardFormModel) -> SolveResult:
        t0 = time.perf_counter()
        h = self._load(model, integer=False)
        h.run()
        status = h.getModelStatus()
        if status == _MS.kUnboundedOrInfeasible:
            h.setOptionValue("presolve", "off")
            h.clearSolver()
            h.run()
            status = h.getModelStatus()
        info = h.getInfo()
        iters = int(info.simplex_iteration_count)
        wall = time.perf_counter() - t0
        if status == _MS.kInfeasible:
            return SolveResult(Status.INFEASIBLE, iterations=iters, wall_time=wall, backend=self.name)
        if status in (_MS.kUnbounded, _MS.kUnboundedOrInfeasible):
            return SolveResult(Status.UNBOUNDED, iterations=iters, wall_time=wall, backend=self.name)
        if status != _MS.kOptimal:
            return SolveResult(Status.LIMIT, iterations=iters, wall_time=wall, backend=self.name)
        sol = h.getSolution()
        sign = -1.0 if model.maximize else 1.0
        x = np.array(sol.col_value, dtype=float)
        y = sign * np.array(sol.row_dual, dtype=float)
        d = sign * np.array(sol.col_dual, dtype=float)
        obj = model.evaluate(x)
        return SolveResult(Status.OPTIMAL, objective=obj, primal=x, duals=y, reduced_costs=d,
                           bound=obj, gap=0.0, iterations=iters, wall_time=wall, backend=self.name)

    def solve_mip(self, model: StandardFormModel, gap_tol: float,
                  time_limit: float | None) -> SolveResult:
        t0 = time.perf_counter()
        h = self._load(model, integer=True)
        h.setOptionValue("mip_rel_gap", float(gap_tol))
        h.setOptionValue("mip_abs_gap", float(gap_tol))
        if time_limit is not None:
            h.setOptionValue("time_limit", max(float(time_limit), 1e-3))
        h.run()
        status = h.getModelStatus()
        info = h.getInfo()
        wall = time.perf_counter() - t0
        nodes = int(getattr(info, "mip_node_count", 0))
        if status == _MS.kInfeasible:
            return SolveResult(Status.INFEASIBLE, nodes=nodes, wall_time=wall, backend=self.name)
        if status in (_MS.kUnbounded, _MS.kUnboundedOrInfeasible):
            return SolveResult(Status.UNBOUNDED, nodes=nodes, wall_time=wall, backend=self.name)
        sign = -1.0 if model.maximize else 1.0
        has_x = info.primal_solution_status >= 2
        x = np.array(h.getSolution().col_value, dtype=float) if has_x else None
        bound = sign * float(info.mip_dual_bound) if model.is_mip else math.nan
        obj = model.evaluate(x) if x is not None else math.nan
        if not model.is_mip and x is not None:
            bound = obj
        st = Status.OPTIMAL if status == _MS.kOptimal else Status.LIMIT
        if st is Status.LIMIT and x is None and status not in (_MS.kTimeLimit, _MS.kIterationLimit,
                                                               _MS.kSolutionLimit, _MS.kInterrupt):
            st = Status.INFEASIBLE
        return SolveResult(st, objective=obj, primal=x, bound=bound,
                           gap=relative_gap(obj, bound) if x is not None else math.inf,
                           nodes=nodes, wall_time=wall, backend=self.name)
