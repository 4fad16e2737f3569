"""
Bounded dual simplex for warm-started node relaxations.

Rows are kept as ``A x + s = b`` with one logical per row (``<=``: s >= 0,
``>=``: s <= 0, ``=``: s = 0) and column bounds are handled implicitly, so
nothing is added for finite upper bounds. A basis that was optimal for a
parent node stays dual feasible when a child only tightens bounds; the
child restarts from it and pivots until primal feasible.

Every answer is re-checked on a fresh factorization of the final basis
(primal and dual feasibility for OPTIMAL, a Farkas row for INFEASIBLE).
Anything that fails the check, stalls, or starts dual infeasible returns
None, and the caller falls back to ``simplex.solve_lp``.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from tsodsoGame import settings
from tsodsoGame.milp.model import INF, MilpModel, Sense, SolveStatus

logger = logging.getLogger(__name__)

PRIMAL_TOL = 1e-9
DUAL_TOL = 1e-9
ALPHA_TOL = 1e-11
REFACTOR_EVERY = 40


@dataclass
class WarmResult:
    status: SolveStatus             # OPTIMAL or INFEASIBLE
    values: np.ndarray              # structural columns; empty when infeasible
    objective: float                # model sense
    duals: np.ndarray               # model sense, one per row
    basis: Optional[np.ndarray]     # basic column indices over [x, s]
    iterations: int


class DualSimplex:
    """One model's data in ``[A | I]`` form, solved under per-call bounds."""

    def __init__(self, model: MilpModel, iteration_limit: Optional[int] = None):
        n, m = model.num_vars, model.num_constraints
        self.n, self.m = n, m
        a = np.zeros((m, n))
        self.b = np.zeros(m)
        self.slack_lower = np.zeros(m)
        self.slack_upper = np.zeros(m)
        for i, c in enumerate(model.constraints):
            for j, coef in c.coefs.items():
                a[i, j] = coef
            self.b[i] = c.rhs
            if c.sense == Sense.LE:
                self.slack_upper[i] = INF
            elif c.sense == Sense.GE:
                self.slack_lower[i] = -INF
        self.matrix = np.hstack([a, np.eye(m)])
        self.sign = -1.0 if model.maximize else 1.0
        self.cost = np.zeros(n + m)
        for j, c in model.objective.items():
            self.cost[j] = self.sign * c
        self.offset = model.objective_constant
        self.dual_tol = DUAL_TOL * (1.0 + float(np.max(np.abs(self.cost), initial=0.0)))
        self.iteration_limit = min(iteration_limit or settings.SIMPLEX_ITERATION_LIMIT, 20 * (n + m) + 100)

    def solve(self, lower: np.ndarray, upper: np.ndarray,
              basis: Optional[np.ndarray] = None) -> Optional[WarmResult]:
        n, m = self.n, self.m
        if m == 0:
            return None
        lo = np.concatenate([np.asarray(lower, dtype=float), self.slack_lower])
        hi = np.concatenate([np.asarray(upper, dtype=float), self.slack_upper])
        if np.any(lo > hi + settings.FEASIBILITY_TOL):
            return self._infeasible(None, 0)

        basic = np.arange(n, n + m) if basis is None else np.array(basis, dtype=int)
        binv = self._invert(basic)
        if binv is None:
            return None
        is_basic = np.zeros(n + m, dtype=bool)
        is_basic[basic] = True

        # nonbasic placement follows the sign of the reduced cost
        d = self._reduced(basic, binv)
        fin_lo, fin_hi = np.isfinite(lo), np.isfinite(hi)
        free = ~fin_lo & ~fin_hi
        nonbasic = ~is_basic
        at_upper = nonbasic & ((d < -self.dual_tol) | ((np.abs(d) <= self.dual_tol) & ~fin_lo & fin_hi))
        needs_lo = nonbasic & (d > self.dual_tol) & ~fin_lo
        needs_hi = nonbasic & (d < -self.dual_tol) & ~fin_hi
        if needs_lo.any() or needs_hi.any():
            return None

        for it in range(self.iteration_limit):
            if it and it % REFACTOR_EVERY == 0:
                binv = self._invert(basic)
                if binv is None:
                    return None
            x = self._nonbasic_values(lo, hi, at_upper, is_basic)
            xb = binv @ (self.b - self.matrix @ x)
            below = lo[basic] - xb
            above = xb - hi[basic]
            scale = 1.0 + np.abs(xb)
            viol = np.maximum(below, above) / scale
            r = int(np.argmax(viol))
            if viol[r] <= PRIMAL_TOL:
                return self._optimal(basic, lo, hi, at_upper, is_basic, it)

            to_lower = below[r] >= above[r]
            alpha = binv[r] @ self.matrix
            alpha[is_basic] = 0.0
            d = self._reduced(basic, binv)
            movable = ~is_basic & (hi > lo)
            at_lo = movable & ~at_upper & ~free
            at_hi = movable & at_upper
            is_free = movable & free
            if to_lower:
                eligible = (at_lo & (alpha < -ALPHA_TOL)) | (at_hi & (alpha > ALPHA_TOL))
            else:
                eligible = (at_lo & (alpha > ALPHA_TOL)) | (at_hi & (alpha < -ALPHA_TOL))
            eligible |= is_free & (np.abs(alpha) > ALPHA_TOL)
            if not eligible.any():
                return self._certify_infeasible(basic, r, lo, hi, it)

            cand = np.flatnonzero(eligible)
            ratios = np.abs(d[cand]) / np.abs(alpha[cand])
            near = cand[ratios <= ratios.min() + 1e-12]
            q = int(near[np.argmax(np.abs(alpha[near]))])

            col = binv @ self.matrix[:, q]
            piv = col[r]
            if abs(piv) < ALPHA_TOL:
                return None
            leaving = int(basic[r])
            binv[r] /= piv
            col[r] = 0.0
            binv -= np.outer(col, binv[r])
            basic[r] = q
            is_basic[q] = True
            is_basic[leaving] = False
            at_upper[q] = False
            at_upper[leaving] = not to_lower

        logger.debug(f"dual simplex stopped after {self.iteration_limit} iterations")
        return None

    # --- helpers -------------------------------------------------------------
    def _invert(self, basic: np.ndarray) -> Optional[np.ndarray]:
        try:
            return np.linalg.inv(self.matrix[:, basic])
        except np.linalg.LinAlgError:
            return None

    def _reduced(self, basic: np.ndarray, binv: np.ndarray) -> np.ndarray:
        y = self.cost[basic] @ binv
        d = self.cost - y @ self.matrix
        d[basic] = 0.0
        return d

    @staticmethod
    def _nonbasic_values(lo, hi, at_upper, is_basic) -> np.ndarray:
        x = np.where(at_upper, hi, lo)
        x[~np.isfinite(x)] = 0.0
        x[is_basic] = 0.0
        return x

    def _optimal(self, basic, lo, hi, at_upper, is_basic, iterations) -> Optional[WarmResult]:
        binv = self._invert(basic)
        if binv is None:
            return None
        x = self._nonbasic_values(lo, hi, at_upper, is_basic)
        x[basic] = binv @ (self.b - self.matrix @ x)
        tol = settings.FEASIBILITY_TOL
        if np.any(x < lo - tol * (1.0 + np.abs(x))) or np.any(x > hi + tol * (1.0 + np.abs(x))):
            return None
        if np.any(np.abs(self.matrix @ x - self.b) > tol * (1.0 + np.abs(self.b))):
            return None
        y = self.cost[basic] @ binv
        d = self.cost - y @ self.matrix
        movable = ~is_basic & (hi > lo)
        free = movable & ~np.isfinite(lo) & ~np.isfinite(hi)
        dtol = 100.0 * self.dual_tol
        wrong = ((movable & ~at_upper & ~free & (d < -dtol)) | (movable & at_upper & (d > dtol))
                 | (free & (np.abs(d) > dtol)))
        if wrong.any():
            return None
        values = np.clip(x[: self.n], lo[: self.n], hi[: self.n])
        objective = self.offset + self.sign * float(self.cost[: self.n] @ values)
        return WarmResult(SolveStatus.OPTIMAL, values, objective, self.sign * y, basic.copy(), iterations)

    def _certify_infeasible(self, basic, r, lo, hi, iterations) -> Optional[WarmResult]:
        binv = self._invert(basic)
        if binv is None:
            return None
        rho = binv[r]
        alpha = rho @ self.matrix
        alpha[basic] = 0.0
        alpha[basic[r]] = 1.0
        rhs = float(rho @ self.b)
        big = np.abs(alpha) > ALPHA_TOL
        if np.any(~big & (alpha != 0.0) & ~(np.isfinite(lo) & np.isfinite(hi))):
            return None
        alpha = np.where(big, alpha, 0.0)
        with np.errstate(invalid="ignore"):
            top = np.where(alpha > 0, alpha * hi, np.where(alpha < 0, alpha * lo, 0.0)).sum()
            bottom = np.where(alpha > 0, alpha * lo, np.where(alpha < 0, alpha * hi, 0.0)).sum()
        margin = 1e-7 * (1.0 + abs(rhs))
        if top < rhs - margin or bottom > rhs + margin:
            return self._infeasible(basic, iterations)
        return None

    def _infeasible(self, basic, iterations) -> WarmResult:
        return WarmResult(SolveStatus.INFEASIBLE, np.empty(0), float("nan"), np.full(self.m, np.nan),
                          None if basic is None else basic.copy(), iterations)
