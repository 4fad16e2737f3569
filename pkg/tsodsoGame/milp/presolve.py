"""
Node bound propagation.

Activity-based tightening over every row, integer rounding of binary
bounds, and SOS1 fixing (once one member is forced away from zero, the
others are fixed to 0). Only ever shrinks the box, so it is safe to run at
every node; with the leader's selection binaries fixed it pins the McCormick
auxiliaries and most of the slack bounds before any LP is solved.
"""

import logging
from typing import Optional, Sequence, Tuple

import numpy as np

from tsodsoGame import settings
from tsodsoGame.milp.model import MilpModel, Sense

logger = logging.getLogger(__name__)

COEF_TOL = 1e-9
BOUND_CAP = 1e9         # implied bounds beyond this are ignored
MIN_GAIN = 1e-7
PASSES = 4


class BoundPropagator:
    def __init__(self, model: MilpModel):
        n, m = model.num_vars, model.num_constraints
        a = np.zeros((m, n))
        self.b = np.zeros(m)
        self.upper_rows = np.zeros(m, dtype=bool)      # sum a x <= b holds
        self.lower_rows = np.zeros(m, dtype=bool)      # sum a x >= b holds
        for i, c in enumerate(model.constraints):
            for j, coef in c.coefs.items():
                if abs(coef) > COEF_TOL:
                    a[i, j] = coef
            self.b[i] = c.rhs
            self.upper_rows[i] = c.sense in (Sense.LE, Sense.EQ)
            self.lower_rows[i] = c.sense in (Sense.GE, Sense.EQ)
        self.a = a
        self.pos = a > 0.0
        self.neg = a < 0.0
        self.binaries = np.array(model.binary_indices(), dtype=int)
        self.sos_sets = [np.array(s.members, dtype=int) for s in model.sos1]

    def tighten(self, lower: np.ndarray, upper: np.ndarray) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        """Tightened copies of the bounds, or None when the box is empty."""
        lo = np.array(lower, dtype=float)
        hi = np.array(upper, dtype=float)
        if self.a.shape[0] == 0 or self.a.shape[1] == 0:
            return self._finish(lo, hi)
        for _ in range(PASSES):
            new_lo, new_hi = self._implied(lo, hi)
            gain_hi = new_hi < hi - MIN_GAIN * (1.0 + np.abs(new_hi))
            gain_lo = new_lo > lo + MIN_GAIN * (1.0 + np.abs(new_lo))
            if not (gain_hi.any() or gain_lo.any()):
                break
            hi = np.where(gain_hi, new_hi, hi)
            lo = np.where(gain_lo, new_lo, lo)
            out = self._finish(lo, hi)
            if out is None:
                return None
            lo, hi = out
        return self._finish(lo, hi)

    def _implied(self, lo: np.ndarray, hi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        a, pos, neg = self.a, self.pos, self.neg
        with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
            cmin = np.where(pos, a * lo, np.where(neg, a * hi, 0.0))
            cmax = np.where(pos, a * hi, np.where(neg, a * lo, 0.0))
            nz = pos | neg
            new_hi = np.full(a.shape[1], np.inf)
            new_lo = np.full(a.shape[1], -np.inf)
            for rows, contrib, sign in ((self.upper_rows, cmin, -1.0), (self.lower_rows, cmax, 1.0)):
                inf_mask = np.isinf(contrib)
                fin = np.where(inf_mask, 0.0, contrib)
                others_inf = inf_mask.sum(axis=1)[:, None] - inf_mask
                rest = fin.sum(axis=1)[:, None] - fin
                ok = rows[:, None] & nz & (others_inf == 0)
                bound = np.where(ok, (self.b[:, None] - rest) / np.where(nz, a, 1.0), np.nan)
                bound = np.where(np.abs(bound) <= BOUND_CAP, bound, np.nan)
                # <= rows: a > 0 caps from above; >= rows: a > 0 lifts from below
                caps = (pos if sign < 0 else neg) & ~np.isnan(bound)
                lifts = (neg if sign < 0 else pos) & ~np.isnan(bound)
                new_hi = np.minimum(new_hi, np.where(caps, bound, np.inf).min(axis=0))
                new_lo = np.maximum(new_lo, np.where(lifts, bound, -np.inf).max(axis=0))
        slack = 1e-9 * (1.0 + np.abs(new_hi))
        new_hi = new_hi + np.where(np.isfinite(new_hi), slack, 0.0)
        slack = 1e-9 * (1.0 + np.abs(new_lo))
        new_lo = new_lo - np.where(np.isfinite(new_lo), slack, 0.0)
        return new_lo, new_hi

    def _finish(self, lo: np.ndarray, hi: np.ndarray) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        tol = settings.INTEGRALITY_TOL
        if self.binaries.size:
            b = self.binaries
            hi[b] = np.floor(hi[b] + tol)
            lo[b] = np.ceil(lo[b] - tol)
        for members in self.sos_sets:
            if not self._fix_sos(members, lo, hi):
                return None
        crossed = lo > hi + settings.FEASIBILITY_TOL * (1.0 + np.abs(lo))
        if crossed.any():
            return None
        hi = np.maximum(hi, lo)
        return lo, hi

    @staticmethod
    def _fix_sos(members: Sequence[int], lo: np.ndarray, hi: np.ndarray) -> bool:
        tol = settings.FEASIBILITY_TOL
        forced = [j for j in members if lo[j] > tol or hi[j] < -tol]
        if len(forced) > 1:
            return False
        if forced:
            for j in members:
                if j != forced[0]:
                    if lo[j] > tol or hi[j] < -tol:
                        return False
                    lo[j] = hi[j] = 0.0
        return True
