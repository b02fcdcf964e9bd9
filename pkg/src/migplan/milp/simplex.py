"""Dense bounded-variable primal simplex.

Two-phase method on ``A x + s = b`` with one slack per row and one
artificial per row for the initial basis. Pricing is steepest edge with
Goldfarb-Reid weight updates; after ``5 m`` consecutive degenerate pivots
the method switches to Bland's rule until a pivot makes progress. The basis
inverse is kept explicitly and refactored periodically.

Sized for desk-scale models (a few hundred rows). Larger models belong on
an external backend.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

FEAS_TOL = 1e-9
DUAL_TOL = 1e-9
PIVOT_TOL = 1e-9
REFACTOR_EVERY = 100

_LOWER, _UPPER, _FREE, _BASIC = 0, 1, 2, 3


@dataclass
class LPOutcome:
    status: str  # optimal | infeasible | unbounded | iteration-limit
    x: np.ndarray | None = None
    objective: float = math.nan
    y: np.ndarray | None = None
    d: np.ndarray | None = None
    iterations: int = 0


class _Tableau:
    def __init__(self, M, b, lo, hi, x, basis, state):
        self.M, self.b, self.lo, self.hi = M, b, lo, hi
        self.x, self.basis, self.state = x, basis, state
        self.m = M.shape[0]
        self.refactor()

    def refactor(self):
        B = self.M[:, self.basis]
        self.Binv = np.linalg.inv(B)
        nonbasic = np.ones(self.M.shape[1], dtype=bool)
        nonbasic[self.basis] = False
        r = self.b - self.M[:, nonbasic] @ self.x[nonbasic]
        self.x[self.basis] = self.Binv @ r

    def run(self, cost, max_iter, iters_done=0):
        m, M, lo, hi, x = self.m, self.M, self.lo, self.hi, self.x
        N = M.shape[1]
        gamma = 1.0 + np.einsum("ij,ij->j", self.Binv @ M, self.Binv @ M)
        degenerate, bland = 0, False
        it = iters_done
        since_refactor = 0
        fixed = lo == hi
        while True:
            if it >= max_iter:
                return "iteration-limit", it
            y = cost[self.basis] @ self.Binv
            d = cost - y @ M
            st = self.state
            elig = ((st == _LOWER) & (d < -DUAL_TOL)) | ((st == _UPPER) & (d > DUAL_TOL)) \
                | ((st == _FREE) & (np.abs(d) > DUAL_TOL))
            elig &= ~fixed
            cand = np.flatnonzero(elig)
            if cand.size == 0:
                return "optimal", it
            if bland:
                q = int(cand[0])
            else:
                score = d[cand] ** 2 / gamma[cand]
                q = int(cand[np.argmax(score)])
            direction = 1.0 if d[q] < 0 else -1.0
            alpha = self.Binv @ M[:, q]
            rate = -direction * alpha
            xb = x[self.basis]
            lob, hib = lo[self.basis], hi[self.basis]
            lim = np.full(m, math.inf)
            dec = rate < -PIVOT_TOL
            inc = rate > PIVOT_TOL
            with np.errstate(invalid="ignore", divide="ignore"):
                lim[dec] = (xb[dec] - lob[dec]) / (-rate[dec])
                lim[inc] = (hib[inc] - xb[inc]) / rate[inc]
            lim = np.where(np.isnan(lim), math.inf, np.maximum(lim, 0.0))
            theta_flip = hi[q] - lo[q]
            theta_ratio = lim.min() if m else math.inf
            if math.isinf(theta_ratio) and math.isinf(theta_flip):
                return "unbounded", it
            it += 1
            if theta_flip <= theta_ratio:
                theta = theta_flip
                x[self.basis] = xb + rate * theta
                x[q] = hi[q] if direction > 0 else lo[q]
                self.state[q] = _UPPER if direction > 0 else _LOWER
            else:
                theta = theta_ratio
                ties = np.flatnonzero(lim <= theta_ratio + 1e-12)
                if bland:
                    p = int(ties[np.argmin(np.asarray(self.basis)[ties])])
                else:
                    p = int(ties[np.argmax(np.abs(alpha[ties]))])
                leaving = self.basis[p]
                x[self.basis] = xb + rate * theta
                x[q] = x[q] + direction * theta
                x[leaving] = lo[leaving] if rate[p] < 0 else hi[leaving]
                self.state[leaving] = _LOWER if rate[p] < 0 else _UPPER
                # Goldfarb-Reid reference weights
                piv = alpha[p]
                row_p = self.Binv[p] @ M
                v = self.Binv.T @ alpha
                gq = 1.0 + alpha @ alpha
                ratio = row_p / piv
                gamma = np.maximum(gamma - 2.0 * ratio * (v @ M) + ratio ** 2 * gq, 1.0 + ratio ** 2)
                gamma[leaving] = max(gq / piv ** 2, 1.0 + 1.0 / piv ** 2)
                # eta update of the basis inverse
                new_row = self.Binv[p] / piv
                self.Binv -= np.outer(alpha, new_row)
                self.Binv[p] = new_row
                self.basis[p] = q
                self.state[q] = _BASIC
                since_refactor += 1
                if since_refactor >= REFACTOR_EVERY:
                    self.refactor()
                    since_refactor = 0
            if theta <= 1e-12:
                degenerate += 1
                if degenerate > 5 * m:
                    bland = True
            else:
                degenerate, bland = 0, False


def simplex_solve(c, A, sense, b, lower, upper, max_iter: int | None = None) -> LPOutcome:
    """Minimise ``c.x`` subject to ``A x (sense) b`` and ``lower <= x <= upper``.

    ``sense`` entries are ``'<'``, ``'='`` or ``'>'``. Returned ``y`` are
    row sensitivities ``d obj / d b``; ``d`` are structural reduced costs.
    """
    A = np.asarray(A, dtype=float)
    m, n = A.shape
    c = np.asarray(c, dtype=float)
    b = np.asarray(b, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    sense = np.asarray(sense)
    if max_iter is None:
        max_iter = 50 * (m + n) + 1000

    x0 = np.where(np.isfinite(lower), lower, np.where(np.isfinite(upper), upper, 0.0))
    resid = b - A @ x0
    sgn = np.where(resid >= 0, 1.0, -1.0)
    M = np.hstack([A, np.eye(m), np.diag(sgn)])
    slo = np.where(sense == "<", 0.0, np.where(sense == ">", -math.inf, 0.0))
    shi = np.where(sense == "<", math.inf, 0.0)
    lo = np.concatenate([lower, slo, np.zeros(m)])
    hi = np.concatenate([upper, shi, np.full(m, math.inf)])
    x = np.concatenate([x0, np.zeros(m), np.abs(resid)])
    state = np.empty(n + 2 * m, dtype=int)
    for j in range(n + m):
        if math.isfinite(lo[j]) and x[j] == lo[j]:
            state[j] = _LOWER
        elif math.isfinite(hi[j]) and x[j] == hi[j]:
            state[j] = _UPPER
        else:
            state[j] = _FREE
    basis = list(range(n + m, n + 2 * m))
    state[basis] = _BASIC
    tab = _Tableau(M, b, lo, hi, x, basis, state)

    phase1 = np.concatenate([np.zeros(n + m), np.ones(m)])
    status, it = tab.run(phase1, max_iter)
    if status == "iteration-limit":
        return LPOutcome("iteration-limit", iterations=it)
    tab.refactor()
    infeas = float(np.sum(tab.x[n + m:]))
    if infeas > 1e-7 * max(1.0, float(np.abs(b).max(initial=0.0))):
        return LPOutcome("infeasible", iterations=it)

    hi[n + m:] = 0.0
    tab.x[n + m:] = np.clip(tab.x[n + m:], 0.0, 0.0)
    for j in range(n + m, n + 2 * m):
        if tab.state[j] != _BASIC:
            tab.state[j] = _LOWER
    tab.refactor()
    phase2 = np.concatenate([c, np.zeros(2 * m)])
    status, it = tab.run(phase2, max_iter, it)
    if status != "optimal":
        return LPOutcome(status, iterations=it)
    tab.refactor()
    y = phase2[tab.basis] @ tab.Binv
    d = c - y @ A
    xs = tab.x[:n].copy()
    return LPOutcome("optimal", x=xs, objective=float(c @ xs), y=y, d=d, iterations=it)
