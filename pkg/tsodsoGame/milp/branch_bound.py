"""
Best-first branch-and-bound with depth-first plunging.

Branching order: fractional binaries first (most-fractional rule), then
violated SOS1 sets, which are split into two halves, each child fixing one
half to zero. Every node first runs bound propagation (``presolve``), then
solves its relaxation with the bounded dual simplex restarted from the
parent's final basis; ``simplex.solve_lp`` takes over whenever the warm
solve cannot vouch for its answer. A rounding step that keeps the largest
member of each SOS1 set supplies early incumbents. A run is fully
determined by the model and the config.
"""

import heapq
import itertools
import logging
import math
import time
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from tsodsoGame import settings
from tsodsoGame.milp.dual_simplex import DualSimplex
from tsodsoGame.milp.model import MilpModel, MilpSolution, SolveStatus, SolverConfig, empty_solution
from tsodsoGame.milp.presolve import BoundPropagator
from tsodsoGame.milp.simplex import solve_lp

logger = logging.getLogger(__name__)

ROUNDING_EVERY = 20     # nodes between rounding attempts once an incumbent exists


@dataclass
class Node:
    lower: np.ndarray
    upper: np.ndarray
    bound: float        # parent relaxation value, minimization sense
    depth: int
    seq: int
    basis: Optional[np.ndarray] = None


class _Relaxation:
    """Node LP solves: propagation, warm dual simplex, cold fallback."""

    def __init__(self, model: MilpModel, cfg: SolverConfig):
        self.model = model
        self.cfg = cfg
        self.propagator = BoundPropagator(model)
        self.warm = DualSimplex(model, cfg.iteration_limit)
        self.names = tuple(v.name for v in model.variables)
        self.warm_solves = self.cold_solves = 0

    def solve(self, lower, upper, basis) -> Tuple[MilpSolution, Optional[np.ndarray], np.ndarray, np.ndarray]:
        box = self.propagator.tighten(lower, upper)
        if box is None:
            return empty_solution(self.model, SolveStatus.INFEASIBLE), None, lower, upper
        lo, hi = box
        res = self.warm.solve(lo, hi, basis)
        if res is not None:
            self.warm_solves += 1
            if res.status == SolveStatus.INFEASIBLE:
                return empty_solution(self.model, SolveStatus.INFEASIBLE, iterations=res.iterations), None, lo, hi
            sol = MilpSolution(SolveStatus.OPTIMAL, res.values, res.objective, res.duals, bound=res.objective,
                               iterations=res.iterations, names=self.names)
            return sol, res.basis, lo, hi
        self.cold_solves += 1
        return solve_lp(self.model, lo, hi, self.cfg.iteration_limit), None, lo, hi


def solve_milp(model: MilpModel, config: Optional[SolverConfig] = None) -> MilpSolution:
    """Solve ``model`` to proven optimality or until a limit is hit.

    Returns the incumbent (if any) with status OPTIMAL, INFEASIBLE, UNBOUNDED
    or one of the limit statuses; ``bound`` carries the best remaining
    relaxation value in the model's sense. With ``config.first_incumbent``
    the search stops at the first feasible point (status OPTIMAL is then
    only a feasibility verdict).
    """
    cfg = config or SolverConfig.from_settings()
    model.validate()
    binaries = np.array(model.binary_indices(), dtype=int)
    sos_sets = [np.array(s.members, dtype=int) for s in model.sos1]
    if binaries.size == 0 and not sos_sets:
        sol = solve_lp(model, iteration_limit=cfg.iteration_limit)
        sol.nodes = 1
        return sol

    sign = -1.0 if model.maximize else 1.0
    started = time.monotonic()
    counter = itertools.count()
    heap: List[Tuple[float, int, Node]] = []
    incumbent: Optional[MilpSolution] = None
    best = math.inf
    nodes = iterations = 0
    status = SolveStatus.OPTIMAL
    relax = _Relaxation(model, cfg)

    current: Optional[Node] = Node(model.lower(), model.upper(), -math.inf, 0, next(counter))
    while True:
        if cfg.first_incumbent and incumbent is not None:
            heap.clear()
            current = None
            break
        if current is None:
            while heap and _pruned(heap[0][0], best, cfg.mip_gap):
                heapq.heappop(heap)
            if not heap:
                break
            current = heapq.heappop(heap)[2]
        elif _pruned(current.bound, best, cfg.mip_gap):
            current = None
            continue

        if nodes >= cfg.node_limit:
            status = SolveStatus.NODE_LIMIT
            break
        if time.monotonic() - started > cfg.time_limit:
            status = SolveStatus.TIME_LIMIT
            break

        sol, basis, lo, hi = relax.solve(current.lower, current.upper, current.basis)
        nodes += 1
        iterations += sol.iterations
        node = current
        current = None

        if sol.status == SolveStatus.INFEASIBLE:
            continue
        if sol.status == SolveStatus.UNBOUNDED:
            if node.depth == 0:
                out = empty_solution(model, SolveStatus.UNBOUNDED, nodes, iterations)
                out.bound = -sign * math.inf
                return out
            continue
        if sol.status != SolveStatus.OPTIMAL:
            status = sol.status
            heapq.heappush(heap, (node.bound, node.seq, node))
            break

        value = sign * sol.objective
        if _pruned(value, best, cfg.mip_gap):
            continue

        tightened = Node(lo, hi, value, node.depth, node.seq, basis)
        children = _branch(sol.values, tightened, binaries, sos_sets, value, counter)
        if children is None:
            best = value
            incumbent = sol
            logger.debug(f"{model.name}: incumbent {sol.objective:.6f} at node {nodes}")
            continue

        if incumbent is None or nodes % ROUNDING_EVERY == 1:
            found = _round(relax, sol.values, tightened, binaries, sos_sets)
            if found is not None:
                nodes += 1
                iterations += found.iterations
                if sign * found.objective < best:
                    best = sign * found.objective
                    incumbent = found
                    logger.debug(f"{model.name}: rounded incumbent {found.objective:.6f} at node {nodes}")
                if _pruned(value, best, cfg.mip_gap):
                    continue

        current = children[0]
        for child in children[1:]:
            heapq.heappush(heap, (child.bound, child.seq, child))

    open_bounds = [b for b, _, _ in heap if not _pruned(b, best, cfg.mip_gap)]
    if current is not None and not _pruned(current.bound, best, cfg.mip_gap):
        open_bounds.append(current.bound)
    bound = min(open_bounds + [best]) if open_bounds or math.isfinite(best) else math.inf

    if incumbent is None:
        if status == SolveStatus.OPTIMAL:
            status = SolveStatus.INFEASIBLE
        out = empty_solution(model, status, nodes, iterations)
        out.bound = sign * bound
        return out

    logger.debug(f"{model.name}: {status.value}, objective {incumbent.objective:.6f}, "
                 f"{nodes} nodes, {iterations} simplex iterations, "
                 f"{relax.warm_solves} warm / {relax.cold_solves} cold LPs")
    incumbent.status = status
    incumbent.nodes = nodes
    incumbent.iterations = iterations
    incumbent.bound = sign * bound
    return incumbent


def _pruned(bound: float, best: float, gap: float) -> bool:
    if not math.isfinite(best):
        return False
    return bound >= best - max(1e-9, gap * max(1.0, abs(best)))


def _round(relax: _Relaxation, x: np.ndarray, node: Node, binaries: np.ndarray, sos_sets) -> Optional[MilpSolution]:
    """Binaries rounded, every SOS1 set reduced to its largest member; None unless that LP is feasible."""
    lo, hi = node.lower.copy(), node.upper.copy()
    if binaries.size:
        r = np.clip(np.round(x[binaries]), lo[binaries], hi[binaries])
        lo[binaries] = hi[binaries] = r
    for members in sos_sets:
        keep = members[int(np.argmax(np.abs(x[members])))]
        others = members[members != keep]
        if np.any(lo[others] > settings.FEASIBILITY_TOL) or np.any(hi[others] < -settings.FEASIBILITY_TOL):
            return None
        lo[others] = 0.0
        hi[others] = 0.0
    sol, _, _, _ = relax.solve(lo, hi, node.basis)
    if sol.status != SolveStatus.OPTIMAL:
        return None
    if _branch(sol.values, node, binaries, sos_sets, 0.0, itertools.count()) is not None:
        return None
    return sol


def _branch(x: np.ndarray, node: Node, binaries: np.ndarray, sos_sets, value: float, counter):
    """Children of ``node`` at relaxation point ``x``, plunge child first; None if x is feasible."""
    tol = settings.INTEGRALITY_TOL
    if binaries.size:
        xb = x[binaries]
        frac = np.minimum(xb - np.floor(xb), np.ceil(xb) - xb)
        k = int(np.argmax(frac))
        if frac[k] > tol:
            j = int(binaries[k])
            down = _child(node, value, counter)
            down.upper[j] = 0.0
            up = _child(node, value, counter)
            up.lower[j] = 1.0
            return [up, down] if x[j] >= 0.5 else [down, up]

    worst, chosen = 0.0, None
    for members in sos_sets:
        mag = np.abs(x[members])
        nz = np.flatnonzero(mag > settings.FEASIBILITY_TOL)
        if nz.size > 1:
            violation = float(mag.sum() - mag.max())
            if violation > worst:
                worst, chosen = violation, (members, nz, mag)
    if chosen is None:
        return None

    members, nz, mag = chosen
    r = (int(nz[0]) + int(nz[-1])) // 2
    left_zero, right_zero = members[: r + 1], members[r + 1:]
    # lower = upper = 0 is a pure tightening only because MilpModel.validate
    # rejects SOS1 members whose lb > 0 (or ub < 0)
    keep_left = _child(node, value, counter)
    keep_left.lower[right_zero] = 0.0
    keep_left.upper[right_zero] = 0.0
    keep_right = _child(node, value, counter)
    keep_right.lower[left_zero] = 0.0
    keep_right.upper[left_zero] = 0.0
    if mag[: r + 1].sum() >= mag[r + 1:].sum():
        return [keep_left, keep_right]
    return [keep_right, keep_left]


def _child(node: Node, value: float, counter) -> Node:
    return Node(node.lower.copy(), node.upper.copy(), value, node.depth + 1, next(counter), node.basis)
