"""
Dense two-phase primal simplex.

The model is brought to standard form (shifted/mirrored/split columns,
slacks, surplus and artificial columns, non-negative right-hand sides) and
solved on a numpy tableau. Dantzig pricing is used until a run of degenerate
pivots is seen, after which the solve stays on Bland's rule, which rules out
cycling. The final basis is refactored from the original data to recover
primal values and row duals with one step of iterative refinement.
"""

import logging
from typing import List, Optional, Tuple

import numpy as np

from tsodsoGame import settings
from tsodsoGame.milp.model import MilpModel, MilpSolution, Sense, SolveStatus, empty_solution

logger = logging.getLogger(__name__)

RC_TOL = 1e-9
FIXED_TOL = 1e-12


def solve_lp(model: MilpModel, lower: Optional[np.ndarray] = None, upper: Optional[np.ndarray] = None,
             iteration_limit: Optional[int] = None) -> MilpSolution:
    """Solve the LP relaxation of ``model`` (binaries are treated as [0, 1]).

    ``lower``/``upper`` override the declared column bounds, which is how the
    branch-and-bound passes node fixings in.
    """
    lb = model.lower() if lower is None else np.asarray(lower, dtype=float)
    ub = model.upper() if upper is None else np.asarray(upper, dtype=float)
    limit = iteration_limit or settings.SIMPLEX_ITERATION_LIMIT
    n = model.num_vars

    if np.any(lb > ub + settings.FEASIBILITY_TOL):
        return empty_solution(model, SolveStatus.INFEASIBLE)

    # --- columns -----------------------------------------------------------
    shift = np.zeros(n)
    cols: List[Tuple[int, float]] = []
    col_of: List[List[Tuple[int, float]]] = [[] for _ in range(n)]
    bound_rows: List[Tuple[int, float]] = []
    for j in range(n):
        lo, hi = lb[j], ub[j]
        if np.isfinite(lo) and np.isfinite(hi) and hi - lo <= FIXED_TOL:
            shift[j] = lo
            continue
        if np.isfinite(lo):
            shift[j] = lo
            col_of[j].append((len(cols), 1.0))
            cols.append((j, 1.0))
            if np.isfinite(hi):
                bound_rows.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            shift[j] = hi
            col_of[j].append((len(cols), -1.0))
            cols.append((j, -1.0))
        else:
            col_of[j].append((len(cols), 1.0))
            cols.append((j, 1.0))
            col_of[j].append((len(cols), -1.0))
            cols.append((j, -1.0))

    # --- rows --------------------------------------------------------------
    m0 = model.num_constraints
    m = m0 + len(bound_rows)
    nc = len(cols)
    A = np.zeros((m, nc))
    b = np.zeros(m)
    senses: List[Sense] = []
    for i, con in enumerate(model.constraints):
        rhs = con.rhs
        for j, a in con.coefs.items():
            rhs -= a * shift[j]
            for k, s in col_of[j]:
                A[i, k] += a * s
        b[i] = rhs
        senses.append(con.sense)
    for r, (k, cap) in enumerate(bound_rows):
        A[m0 + r, k] = 1.0
        b[m0 + r] = cap
        senses.append(Sense.LE)

    sign = -1.0 if model.maximize else 1.0
    c = np.zeros(nc)
    for j, cj in model.objective.items():
        for k, s in col_of[j]:
            c[k] += sign * cj * s

    status, x_std, y, iters = _simplex(A, b, senses, c, limit)
    if status != SolveStatus.OPTIMAL:
        logger.debug(f"LP {model.name}: {status.value} after {iters} iterations")
        return empty_solution(model, status, iterations=iters)

    x = shift.copy()
    for k, (j, s) in enumerate(cols):
        x[j] += s * x_std[k]
    x = np.clip(x, lb, ub)
    duals = sign * y[:m0]
    obj = model.objective_value(x)
    return MilpSolution(SolveStatus.OPTIMAL, x, obj, duals, bound=obj, nodes=0, iterations=iters,
                        names=tuple(v.name for v in model.variables))


def _simplex(A: np.ndarray, b: np.ndarray, senses: List[Sense], c: np.ndarray, limit: int):
    """Minimize c.x s.t. rows(A, senses, b), x >= 0. Returns status, x, y, iterations.

    ``y`` holds d(objective)/d(b) for every row.
    """
    m, n = A.shape
    flip = np.where(b < 0.0, -1.0, 1.0)
    A = A * flip[:, None]
    b = b * flip
    senses = [s if f > 0 else {Sense.LE: Sense.GE, Sense.GE: Sense.LE}.get(s, s) for s, f in zip(senses, flip)]

    n_slack = sum(1 for s in senses if s != Sense.EQ)
    n_art = sum(1 for s in senses if s != Sense.LE)
    N = n + n_slack + n_art
    T = np.zeros((m, N))
    T[:, :n] = A
    basis = np.empty(m, dtype=int)
    ks, ka = n, n + n_slack
    for i, s in enumerate(senses):
        if s == Sense.LE:
            T[i, ks] = 1.0
            basis[i] = ks
            ks += 1
        elif s == Sense.GE:
            T[i, ks] = -1.0
            ks += 1
            T[i, ka] = 1.0
            basis[i] = ka
            ka += 1
        else:
            T[i, ka] = 1.0
            basis[i] = ka
            ka += 1
    A_std = T.copy()
    rhs = b.copy()
    art_start = n + n_slack
    iters = 0

    # phase 1
    if n_art:
        c1 = np.zeros(N)
        c1[art_start:] = 1.0
        status, iters = _run(T, rhs, basis, c1, np.ones(N, dtype=bool), limit, iters)
        if status != SolveStatus.OPTIMAL:
            return status, None, None, iters
        infeas = float(np.sum(rhs[basis >= art_start]))
        if infeas > 1e-7 * (1.0 + float(np.abs(b).max(initial=0.0))):
            return SolveStatus.INFEASIBLE, None, None, iters
        # drive zero-level artificials out; rows with no candidate are redundant
        for i in range(m):
            if basis[i] < art_start:
                continue
            rhs[i] = 0.0
            cand = np.flatnonzero(np.abs(T[i, :art_start]) > settings.PIVOT_TOL)
            if cand.size:
                _pivot(T, rhs, i, int(cand[0]))
                basis[i] = int(cand[0])

    # phase 2
    c2 = np.zeros(N)
    c2[:n] = c
    allowed = np.zeros(N, dtype=bool)
    allowed[:art_start] = True
    status, iters = _run(T, rhs, basis, c2, allowed, limit, iters)
    if status != SolveStatus.OPTIMAL:
        return status, None, None, iters

    # refactor on the final basis
    B = A_std[:, basis]
    if m == 0:
        return SolveStatus.OPTIMAL, np.zeros(n), np.zeros(0), iters
    try:
        xb = np.linalg.solve(B, b)
        xb += np.linalg.solve(B, b - B @ xb)
        y = np.linalg.solve(B.T, c2[basis])
        y += np.linalg.solve(B.T, c2[basis] - B.T @ y)
    except np.linalg.LinAlgError:
        logger.debug("singular final basis, keeping tableau values")
        xb = rhs.copy()
        y = np.zeros(m)
    xb[(xb < 0.0) & (xb > -1e-9)] = 0.0
    x = np.zeros(N)
    x[basis] = xb
    return SolveStatus.OPTIMAL, x[:n], y * flip, iters


def _run(T, rhs, basis, cost, allowed, limit, iters):
    m = T.shape[0]
    degenerate = 0
    while True:
        if iters >= limit:
            return SolveStatus.ITERATION_LIMIT, iters
        rc = cost - cost[basis] @ T if m else cost.copy()
        rc[~allowed] = 0.0
        rc[basis] = 0.0
        cand = np.flatnonzero(rc < -RC_TOL)
        if cand.size == 0:
            return SolveStatus.OPTIMAL, iters
        if degenerate >= settings.BLAND_SWITCH:
            q = int(cand[0])
        else:
            q = int(cand[np.argmin(rc[cand])])
        col = T[:, q]
        pos = col > settings.PIVOT_TOL
        if not pos.any():
            return SolveStatus.UNBOUNDED, iters
        ratios = np.full(m, np.inf)
        ratios[pos] = np.maximum(rhs[pos], 0.0) / col[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + 1e-12 * (1.0 + abs(best)))
        p = int(ties[np.argmin(basis[ties])])
        degenerate = degenerate + 1 if best <= 1e-12 else 0
        _pivot(T, rhs, p, q)
        basis[p] = q
        iters += 1


def _pivot(T, rhs, p, q):
    piv = T[p, q]
    T[p] /= piv
    rhs[p] /= piv
    factor = T[:, q].copy()
    factor[p] = 0.0
    T -= np.outer(factor, T[p])
    rhs -= factor * rhs[p]
    T[np.abs(T) < 1e-13] = 0.0
    rhs[(rhs < 0.0) & (rhs > -1e-11)] = 0.0
