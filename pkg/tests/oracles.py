"""Reference solvers used only by the tests.

Everything here is written independently of the package's kernels: a
textbook two-phase full-tableau simplex on the standard-form conversion
of a bounded LP, exhaustive integer enumeration, and a bisection on the
deterministic planning model.
"""
from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np

TOL = 1e-9


def _standard_form(c, A, sense, b, lower, upper):
    """Rewrite ``min c.x, A x (<,=,>) b, l <= x <= u`` (finite l) as ``min c'.s, M s = r, s >= 0``."""
    c = np.asarray(c, float)
    A = np.asarray(A, float)
    b = np.asarray(b, float)
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    m, n = A.shape
    rows, rhs, kinds = [], [], []
    shift = b - A @ lower
    for i in range(m):
        rows.append(A[i].copy())
        rhs.append(shift[i])
        kinds.append(sense[i])
    for j in range(n):
        if math.isfinite(upper[j]):
            e = np.zeros(n)
            e[j] = 1.0
            rows.append(e)
            rhs.append(upper[j] - lower[j])
            kinds.append("<")
    M = np.array(rows).reshape(len(rows), n)
    r = np.array(rhs)
    slack_cols = []
    for i, k in enumerate(kinds):
        if k == "=":
            continue
        col = np.zeros(len(rows))
        col[i] = 1.0 if k == "<" else -1.0
        slack_cols.append(col)
    if slack_cols:
        M = np.hstack([M, np.array(slack_cols).T])
    cost = np.concatenate([c, np.zeros(M.shape[1] - n)])
    neg = r < 0
    M[neg] *= -1
    r[neg] *= -1
    return cost, M, r, float(c @ lower), n


def _pivot(T, row, col):
    T[row] /= T[row, col]
    for i in range(T.shape[0]):
        if i != row and T[i, col] != 0.0:
            T[i] -= T[i, col] * T[row]


def _run(T, basis, ncols):
    """Bland's rule on a tableau whose last row is reduced costs and last column the rhs."""
    for _ in range(50_000):
        red = T[-1, :ncols]
        entering = next((j for j in range(ncols) if red[j] < -TOL), None)
        if entering is None:
            return "optimal"
        col = T[:-1, entering]
        ratios = [(T[i, -1] / col[i], basis[i], i) for i in range(len(col)) if col[i] > TOL]
        if not ratios:
            return "unbounded"
        _, _, leave = min(ratios)
        _pivot(T, leave, entering)
        basis[leave] = entering
    raise RuntimeError("tableau oracle did not terminate")


def tableau_lp(c, A, sense, b, lower, upper):
    """Return ``(status, objective)`` for a minimization LP."""
    cost, M, r, offset, n = _standard_form(c, A, sense, b, lower, upper)
    m, N = M.shape
    T = np.zeros((m + 1, N + m + 1))
    T[:m, :N] = M
    T[:m, N:N + m] = np.eye(m)
    T[:m, -1] = r
    T[-1, N:N + m] = 1.0
    for i in range(m):
        T[-1] -= T[i]
    basis = list(range(N, N + m))
    _run(T, basis, N + m)
    if -T[-1, -1] > 1e-7 * max(1.0, np.abs(r).max(initial=0.0)):
        return "infeasible", math.nan
    # drive remaining artificials out of the basis where possible
    for i, bj in enumerate(basis):
        if bj >= N:
            nz = [j for j in range(N) if abs(T[i, j]) > 1e-9]
            if nz:
                _pivot(T, i, nz[0])
                basis[i] = nz[0]
    keep = [i for i in range(m) if basis[i] < N]
    T2 = np.zeros((len(keep) + 1, N + 1))
    T2[:-1, :N] = T[keep, :N]
    T2[:-1, -1] = T[keep, -1]
    T2[-1, :N] = cost
    b2 = [basis[i] for i in keep]
    for i, bj in enumerate(b2):
        T2[-1] -= cost[bj] * T2[i]
    status = _run(T2, b2, N)
    if status != "optimal":
        return status, math.nan
    return "optimal", -T2[-1, -1] + offset


def enumerate_mip(c, A, sense, b, lower, upper, integer):
    """Exhaustive search over integer columns; continuous parts go to the tableau oracle."""
    c = np.asarray(c, float)
    A = np.asarray(A, float)
    idx = np.flatnonzero(integer)
    ranges = [range(int(math.ceil(lower[j])), int(math.floor(upper[j])) + 1) for j in idx]
    best = math.inf
    for combo in itertools.product(*ranges):
        lo = np.array(lower, float)
        hi = np.array(upper, float)
        lo[idx] = combo
        hi[idx] = combo
        status, obj = tableau_lp(c, A, sense, b, lo, hi)
        if status == "optimal":
            best = min(best, obj)
        elif status == "unbounded":
            return "unbounded", -math.inf
    return ("optimal", best) if math.isfinite(best) else ("infeasible", math.nan)


def enumerate_sp2(first, costs, probabilities, cap, epsilon):
    """Minimum remaining excess over all admissible discard patterns, summed exactly."""
    viol = [(first + float(x)) - cap for x in costs]
    pr = np.asarray(probabilities, float)
    uniform = bool(np.all(pr == pr[0]))
    best = None
    for z in itertools.product((0, 1), repeat=len(viol)):
        chosen = [n for n in range(len(z)) if z[n]]
        if uniform:
            if len(chosen) > math.floor(epsilon / pr[0] + 1e-12):
                continue
        elif math.fsum(pr[chosen]) > epsilon * (1 + 1e-12):
            continue
        exact = sum((Fraction(v) for n, v in enumerate(viol) if v > 0 and not z[n]), Fraction(0))
        if best is None or exact < best[0]:
            best = (exact, z)
    delta = math.fsum(v for n, v in enumerate(viol) if v > 0 and not best[1][n])
    return delta, best[1]


def bisection_igd(problem, nominal, lambda0, tol=1e-6):
    """Largest horizon whose deterministic optimum at the inflated forecast fits the budget."""
    from migplan import builders
    from migplan.milp import Status, solve_mip

    cap = problem.budget_multiplier * lambda0

    def fits(alpha):
        built = builders.build_deterministic(problem, (1 + alpha) * problem.demand_forecast, nominal)
        res = solve_mip(built.model, gap_tol=1e-10)
        return res.status is Status.OPTIMAL and res.objective <= cap * (1 + 1e-10)

    lo, hi = 0.0, problem.alpha_cap
    if fits(hi):
        return hi
    if not fits(lo):
        return math.nan
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if fits(mid):
            lo = mid
        else:
            hi = mid
    return lo
