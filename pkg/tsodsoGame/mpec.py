"""
Single-level MILP of one aggregator's bidding problem.

Every follower market (the DAM and each scenario's services markets) is
replaced by its KKT system: primal rows with explicit slacks, dual
feasibility, stationarity rows with a non-negative reduced cost per column,
and one SOS1 pair per complementarity condition. Bid prices of the leader are
``sum(B_a * x_a)`` over selection binaries; every price-times-quantity term of
the profit is linearized with McCormick auxiliaries, the DAM revenue through
the capacity duals, and lambda times curtailment through the discretized DAM
price.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from tsodsoGame import settings
from tsodsoGame.exceptions import ModelError, SolverError
from tsodsoGame.items import (
    FAMILY_ROLE,
    TRANSMISSION,
    LadderRole,
    MarketCase,
    ProgrammableUnit,
    Scheme,
    StrategyProfile,
    slot_key,
)
from tsodsoGame.markets import LinearMarket, asm_market, dam_market
from tsodsoGame.milp import (
    INF,
    LinExpr,
    MilpModel,
    MilpSolution,
    Sense,
    SolverConfig,
    Var,
    lin_sum,
    solve_milp,
)

logger = logging.getLogger(__name__)


@dataclass
class KktBlock:
    market: LinearMarket
    primal: List[Var]
    reduced: List[Var]
    duals: List[Var]
    slacks: List[Optional[Var]]

    def column_var(self, kind: str, resource: str) -> Var:
        return self.primal[self.market.column(kind, resource)]

    def row_dual(self, key: str) -> Var:
        for i, row in enumerate(self.market.rows):
            if row.key == key:
                return self.duals[i]
        raise KeyError(key)


@dataclass
class MpecInstance:
    model: MilpModel
    case: MarketCase
    scheme: Scheme
    aggregator: str
    profile: StrategyProfile                    # rival prices are read from here
    selection: Dict[str, List[Var]]             # slot key -> one binary per candidate
    lam_candidates: List[Tuple[float, Var]]
    dam: KktBlock
    markets: Dict[Tuple[str, str], KktBlock]    # (scenario, market) -> block
    objective: LinExpr
    symbols: Dict[str, str] = field(default_factory=dict)

    def own_slots(self) -> List[str]:
        return list(self.selection)


@dataclass
class BestResponse:
    choices: Dict[str, int]
    profit: float
    solution: MilpSolution
    instance: MpecInstance


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------
def _max_value(model: MilpModel, q) -> float:
    """Largest value of a float, Var or LinExpr over the declared bounds."""
    e = LinExpr.of(q)
    total = e.constant
    for j, c in e.terms.items():
        v = model.variables[j]
        bnd = v.ub if c > 0 else v.lb
        if not np.isfinite(bnd):
            return INF
        total += c * bnd
    return total


def embed_kkt(model: MilpModel, lm: LinearMarket, prefix: str,
              dual_caps: Optional[Dict[int, float]] = None,
              eq_bounds: Optional[Dict[int, Tuple[float, float]]] = None) -> KktBlock:
    """Add the KKT system of ``lm`` (a minimization) to ``model``.

    ``dual_caps`` bounds the multipliers of ``<=`` rows and ``eq_bounds``
    those of equalities (by row index). Slacks are bounded by the widest
    gap the row can show over the column caps.
    """
    dual_caps = dual_caps or {}
    eq_bounds = eq_bounds or {}
    primal, reduced, duals, slacks = [], [], [], []
    for c in lm.columns:
        primal.append(model.add_var(f"{prefix}:{c.key}", 0.0, c.cap, tag=f"{lm.name}:{c.kind}[{c.resource}]"))
    for i, row in enumerate(lm.rows):
        lhs = lin_sum(a * primal[j] for j, a in row.coefs.items())
        if row.sense == Sense.EQ:
            lo, hi = eq_bounds.get(i, (-INF, INF))
            duals.append(model.add_var(f"{prefix}:pi:{row.key}", lo, hi, tag=f"{lm.name}:dual[{row.key}]"))
            slacks.append(None)
            model.add_constr(lhs, Sense.EQ, row.rhs, name=f"{prefix}:{row.key}")
        else:
            lhs_min = sum(min(0.0, a * lm.columns[j].cap) for j, a in row.coefs.items())
            slack_cap = max(0.0, _max_value(model, row.rhs) - lhs_min) if np.isfinite(lhs_min) else INF
            mu = model.add_var(f"{prefix}:mu:{row.key}", 0.0, dual_caps.get(i, INF), tag=f"{lm.name}:dual[{row.key}]")
            s = model.add_var(f"{prefix}:s:{row.key}", 0.0, slack_cap)
            duals.append(mu)
            slacks.append(s)
            model.add_constr(lhs + s, Sense.EQ, row.rhs, name=f"{prefix}:{row.key}")
            model.add_sos1([mu, s], name=f"{prefix}:cs:{row.key}")
    for j, c in enumerate(lm.columns):
        rc = model.add_var(f"{prefix}:rc:{c.key}", 0.0, INF)
        reduced.append(rc)
        terms = LinExpr.of(c.cost) - rc
        for i, row in enumerate(lm.rows):
            a = row.coefs.get(j)
            if a is None:
                continue
            terms = terms + (a * duals[i] if row.sense != Sense.EQ else -a * duals[i])
        model.add_constr(terms, Sense.EQ, 0.0, name=f"{prefix}:stat:{c.key}")
        model.add_sos1([primal[j], rc], name=f"{prefix}:cs:{c.key}")
    return KktBlock(lm, primal, reduced, duals, slacks)


def add_strong_duality(model: MilpModel, block: KktBlock, primal_cost: LinExpr, name: str) -> int:
    """``c'y + sum_le b mu - sum_eq b pi <= 0`` for a block with constant right-hand sides.

    The left side equals the sum of all complementarity products, so the row
    holds (with equality) exactly at complementary points. ``primal_cost`` is
    c'y with any price-times-quantity products already linearized.
    """
    expr = LinExpr.of(primal_cost)
    for row, dual in zip(block.market.rows, block.duals):
        rhs = LinExpr.of(row.rhs)
        if not rhs.is_constant:
            raise ModelError(f"{name}: row {row.key} has a variable right-hand side")
        expr = expr + (-rhs.constant * dual if row.sense == Sense.EQ else rhs.constant * dual)
    return model.add_constr(expr, Sense.LE, 0.0, name=name)


def linearize_price_times_quantity(model: MilpModel, prices: Sequence[float], selectors: Sequence[Var],
                                   quantity, bound: float, name: str) -> LinExpr:
    """``sum_a B_a * XG_a`` with XG_a = x_a * quantity enforced by McCormick rows."""
    if not np.isfinite(bound):
        raise ModelError(f"{name}: quantity needs a finite bound")
    q = LinExpr.of(quantity)
    out = LinExpr()
    for a, (price, x) in enumerate(zip(prices, selectors)):
        xg = model.add_var(f"{name}:XG{a}", 0.0, bound, tag=f"XG[{name},{a}]")
        model.add_constr(xg - q, Sense.LE, 0.0, name=f"{name}:mc{a}a")
        model.add_constr(xg - q - bound * x, Sense.GE, -bound, name=f"{name}:mc{a}b")
        model.add_constr(xg - bound * x, Sense.LE, 0.0, name=f"{name}:mc{a}c")
        out = out + price * xg
    return out


def linearize_dam_revenue(model: MilpModel, unit: ProgrammableUnit, prices: Sequence[float],
                          selectors: Sequence[Var], g: Var, nu: Var,
                          bid_terms: Optional[LinExpr] = None) -> LinExpr:
    """(lambda - C_u) g_u  ->  sum_a B_a XG_a + G_u nu_u - C_u g_u.

    ``bid_terms`` reuses an existing ``sum_a B_a XG_a`` for this unit.
    """
    revenue = bid_terms
    if revenue is None:
        revenue = linearize_price_times_quantity(model, prices, selectors, g, unit.capacity, f"dam_rev[{unit.id}]")
    return revenue + unit.capacity * nu - unit.cost * g


def lambda_values(case: MarketCase, aggregator: str, profile: StrategyProfile) -> List[float]:
    """Every price the DAM can clear at: own DAM ladders and the rivals' submitted bids."""
    values = set()
    for u in case.units:
        if u.owner == aggregator:
            values.update(case.ladder(u.id, LadderRole.DAM).prices)
        else:
            values.add(profile.price(case, "dam", u.id))
    return sorted(values)


def discretize_lambda(model: MilpModel, case: MarketCase, aggregator: str, profile: StrategyProfile,
                      lam: Var) -> Tuple[List[Tuple[float, Var]], LinExpr]:
    """Binaries over the candidate DAM prices, sum = 1, and lambda_disc = lambda."""
    candidates = []
    for k, v in enumerate(lambda_values(case, aggregator, profile)):
        candidates.append((v, model.add_binary(f"y[{k}]", tag=f"y[{v:g}]")))
    model.add_constr(lin_sum(y for _, y in candidates), Sense.EQ, 1.0, name="lambda_select")
    lam_disc = lin_sum(v * y for v, y in candidates)
    model.add_constr(lam_disc - lam, Sense.EQ, 0.0, name="lambda_link")
    return candidates, lam_disc


# ---------------------------------------------------------------------------
# The MPEC
# ---------------------------------------------------------------------------
def build_mpec(case: MarketCase, scheme: Scheme, aggregator: str, competitor_prices: StrategyProfile) -> MpecInstance:
    scheme = Scheme.parse(scheme)
    if aggregator not in case.aggregators:
        raise ModelError(f"unknown aggregator {aggregator!r}")
    model = MilpModel(f"mpec_{scheme.value}_{aggregator}")
    symbols: Dict[str, str] = {}

    # (a) bid selection
    selection: Dict[str, List[Var]] = {}
    ladder_prices: Dict[str, Tuple[float, ...]] = {}
    for fam, rid in case.bidding_slots(scheme, aggregator):
        key = slot_key(fam, rid)
        prices = case.ladder(rid, FAMILY_ROLE[fam]).prices
        xs = [model.add_binary(f"x:{key}:{a}", tag=f"x[{key},{a}]") for a in range(len(prices))]
        model.add_constr(lin_sum(xs), Sense.EQ, 1.0, name=f"select:{key}")
        selection[key] = xs
        ladder_prices[key] = prices
        for a, x in enumerate(xs):
            symbols[x.name] = f"x[{fam},{rid},{prices[a]:g}]"

    def price(family: str, rid: str):
        key = slot_key(family, rid)
        if key in selection:
            return lin_sum(p * x for p, x in zip(ladder_prices[key], selection[key]))
        return competitor_prices.price(case, family, rid)

    # (b) DAM; lambda can only clear at a candidate price, which bounds it
    # and every capacity dual nu_u <= lambda - b_u
    dam_lm = dam_market(case, price)
    lam_values = lambda_values(case, aggregator, competitor_prices)
    own_units = [u.id for u in case.units_of(aggregator)]
    caps, eq_bounds = {}, {}
    for i, row in enumerate(dam_lm.rows):
        if row.kind == "cap":
            low = (min(case.ladder(row.resource, LadderRole.DAM).prices) if row.resource in own_units
                   else competitor_prices.price(case, "dam", row.resource))
            caps[i] = max(0.0, lam_values[-1] - low)
        elif row.kind == "balance":
            eq_bounds[i] = (lam_values[0], lam_values[-1])
    dam = embed_kkt(model, dam_lm, "dam", caps, eq_bounds)
    lam = dam.row_dual("balance")
    lam_candidates, _ = discretize_lambda(model, case, aggregator, competitor_prices, lam)
    g = {c.resource: dam.primal[j] for j, c in enumerate(dam_lm.columns)}
    bid_terms = {}
    for uid in own_units:
        key = slot_key("dam", uid)
        bid_terms[uid] = linearize_price_times_quantity(model, ladder_prices[key], selection[key], g[uid],
                                                        case.unit(uid).capacity, f"dam_rev[{uid}]")
    dam_cost = lin_sum(bid_terms[c.resource] if c.resource in own_units else c.cost * g[c.resource]
                       for c in dam_lm.columns)
    add_strong_duality(model, dam, dam_cost, "dam:strong_duality")

    # (c) services markets per scenario
    markets: Dict[Tuple[str, str], KktBlock] = {}
    for s in case.scenario_ids():
        if scheme == Scheme.A:
            lm = asm_market(case, scheme, "A", s, price, lambda uid: g[uid])
            markets[(s, "A")] = embed_kkt(model, lm, f"{s}:A")
            continue
        dist = {}
        for k in case.network.distribution_systems:
            lm = asm_market(case, scheme, k, s, price, lambda uid: g[uid])
            dist[k] = markets[(s, k)] = embed_kkt(model, lm, f"{s}:{k}")

        def residual(kind, rid, dist=dist):
            for block in dist.values():
                if block.market.has_column(kind, rid):
                    return block.column_var(kind, rid)
            return 0.0

        lm = asm_market(case, scheme, TRANSMISSION, s, price, lambda uid: g[uid], residual)
        markets[(s, TRANSMISSION)] = embed_kkt(model, lm, f"{s}:T")

    # (d) leader objective
    objective = LinExpr()
    units = case.units_of(aggregator)
    loads = case.flexible_loads_of(aggregator)
    for u in units:
        key = slot_key("dam", u.id)
        objective = objective + linearize_dam_revenue(model, u, ladder_prices[key], selection[key],
                                                      g[u.id], dam.row_dual(f"cap[{u.id}]"), bid_terms[u.id])
    probs = case.scenarios.probabilities()
    for (s, mk), block in markets.items():
        sigma = probs[s]
        up_f, down_f, curt_f = block.market.families
        tag = f"{s}:{mk}"
        for u in units:
            if not block.market.has_column("up", u.id):
                continue
            up, down = block.column_var("up", u.id), block.column_var("down", u.id)
            ku, kd = slot_key(up_f, u.id), slot_key(down_f, u.id)
            rev_up = linearize_price_times_quantity(model, ladder_prices[ku], selection[ku], up, u.capacity,
                                                    f"{tag}:up_rev[{u.id}]")
            pay_dn = linearize_price_times_quantity(model, ladder_prices[kd], selection[kd], down, u.capacity,
                                                    f"{tag}:down_pay[{u.id}]")
            objective = objective + sigma * (rev_up - u.up_cost * up + u.down_cost * down - pay_dn)
        for d in loads:
            if not block.market.has_column("curtail", d.id):
                continue
            qty = block.column_var("curtail", d.id)
            bound = block.market.columns[block.market.column("curtail", d.id)].cap
            kc = slot_key(curt_f, d.id)
            rev = linearize_price_times_quantity(model, ladder_prices[kc], selection[kc], qty, bound,
                                                 f"{tag}:curt_rev[{d.id}]")
            lam_d = linearize_price_times_quantity(model, [v for v, _ in lam_candidates],
                                                   [y for _, y in lam_candidates], qty, bound,
                                                   f"{tag}:lam_curt[{d.id}]")
            objective = objective + sigma * (rev - lam_d)
    model.set_objective(objective, maximize=True)

    for v in model.variables:
        if v.tag and v.name not in symbols:
            symbols[v.name] = v.tag
    logger.debug(f"built {model!r}")
    return MpecInstance(model, case, scheme, aggregator, competitor_prices, selection, lam_candidates,
                        dam, markets, objective, symbols)


def extract_strategy(instance: MpecInstance, solution: MilpSolution) -> Dict[str, int]:
    """Selected candidate index per own slot."""
    if not solution.has_incumbent:
        raise SolverError(f"no incumbent to extract from ({solution.status.value})", status=solution.status.value,
                          aggregator=instance.aggregator)
    out = {}
    for key, xs in instance.selection.items():
        picked = [a for a, x in enumerate(xs) if solution.values[x.index] > 0.5]
        if len(picked) != 1:
            raise SolverError(f"selection for {key} is not unique: {picked}", status=solution.status.value,
                              aggregator=instance.aggregator)
        out[key] = picked[0]
    return out


def fix_selection(instance: MpecInstance, choices: Dict[str, int]) -> None:
    """Fix the leader's selection binaries in place."""
    for key, xs in instance.selection.items():
        for a, x in enumerate(xs):
            instance.model.fix(x, 1.0 if choices[key] == a else 0.0)


def block_objective(block: KktBlock, values: np.ndarray) -> float:
    """Follower objective of an embedded market at a model point."""
    total = 0.0
    for j, c in enumerate(block.market.columns):
        total += LinExpr.of(c.cost).value(values) * float(values[block.primal[j].index])
    return total


def solve_best_response(case: MarketCase, scheme: Scheme, aggregator: str, profile: StrategyProfile,
                        config: Optional[SolverConfig] = None, fixed: Optional[Dict[str, int]] = None,
                        iteration: Optional[int] = None) -> BestResponse:
    """Build, solve and read back one aggregator's MPEC.

    With ``fixed`` the leader's selection is pinned, which evaluates the
    profit of that strategy under optimistic follower behaviour. Otherwise
    ties are broken towards the smallest candidate-index tuple, in slot
    order, the same order ``oracle.StrategySpace`` enumerates.
    """
    instance = build_mpec(case, scheme, aggregator, profile)
    if fixed is not None:
        fix_selection(instance, fixed)
    solution = _solve(instance, config, iteration)
    choices = extract_strategy(instance, solution)
    if fixed is None:
        first = lexicographic_first(instance, solution, config)
        if first != choices:
            logger.debug(f"aggregator {aggregator}: tie broken from {choices} to {first}")
            pinned = build_mpec(case, scheme, aggregator, profile)
            fix_selection(pinned, first)
            instance, solution, choices = pinned, _solve(pinned, config, iteration), first
    logger.debug(f"aggregator {aggregator}: best response profit {solution.objective:.4f} "
                 f"in {solution.nodes} nodes")
    return BestResponse(choices, float(solution.objective), solution, instance)


def _solve(instance: MpecInstance, config: Optional[SolverConfig], iteration: Optional[int]) -> MilpSolution:
    solution = solve_milp(instance.model, config)
    if not solution.is_optimal:
        if not solution.has_incumbent:
            raise SolverError("best response has no solution", status=solution.status.value,
                              aggregator=instance.aggregator, iteration=iteration)
        logger.warning(f"aggregator {instance.aggregator}: {solution.status.value}, using incumbent "
                       f"(bound {solution.bound:.4f})")
    return solution


def lexicographic_first(instance: MpecInstance, solution: MilpSolution,
                        config: Optional[SolverConfig] = None) -> Dict[str, int]:
    """Smallest candidate-index tuple whose optimistic profit ties the optimum.

    Slots are settled one at a time: each earlier candidate of a slot is
    tried with a profit floor and the slots before it pinned; the first
    feasible one wins. Ties are within ``max(PROFIT_TOL, MIP_GAP * |profit|)``.
    """
    cfg = (config or SolverConfig.from_settings()).model_copy(update={"first_incumbent": True})
    floor = solution.objective - max(settings.PROFIT_TOL, cfg.mip_gap * abs(solution.objective))
    model = instance.model.copy()
    model.add_constr(LinExpr(model.objective, model.objective_constant), Sense.GE, floor, name="profit_floor")
    choices = extract_strategy(instance, solution)
    for key, xs in instance.selection.items():
        for a in range(choices[key]):
            trial = model.copy()
            for b, x in enumerate(xs):
                trial.fix(x, 1.0 if a == b else 0.0)
            found = solve_milp(trial, cfg)
            if found.has_incumbent:
                choices = extract_strategy(instance, found)
                break
        for b, x in enumerate(xs):
            model.fix(x, 1.0 if choices[key] == b else 0.0)
    return choices
