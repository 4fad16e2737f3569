"""
Direct clearing of the DAM and of every services-market variant, plus the
cost and profit bookkeeping built on top of the clearing results.
"""

import logging
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from tsodsoGame import settings
from tsodsoGame.exceptions import ClearingError, InfeasibleMarketError
from tsodsoGame.items import (
    TRANSMISSION,
    AsmResult,
    CascadeResult,
    CostSummary,
    DamResult,
    MarketCase,
    ScenarioOutcome,
    Scheme,
    StrategyProfile,
)
from tsodsoGame.markets import LinearMarket, asm_market, dam_market, market_families
from tsodsoGame.milp import MilpModel, Sense, SolveStatus, lin_sum, solve_lp
from tsodsoGame.network import realized_injections

logger = logging.getLogger(__name__)

DUAL_NAME = {
    "up_cap": "up_duals",
    "down_cap": "down_duals",
    "curtail_cap": "curtail_duals",
    "spill_cap": "spill_duals",
    "flow": "flow_duals",
}
QTY_NAME = {"up": "up", "down": "down", "curtail": "curtail", "spill": "spill"}


# ---------------------------------------------------------------------------
# LP plumbing
# ---------------------------------------------------------------------------
def solve_market(lm: LinearMarket) -> Tuple[np.ndarray, np.ndarray, float]:
    """Solve a numeric ``LinearMarket``; returns (column values, row duals, objective).

    Row duals are d(cost)/d(rhs). Among alternative optima the dispatch of
    lower-ranked columns is preferred (second lexicographic pass).
    """
    model = MilpModel(lm.label)
    cols = [model.add_var(f"y{j}") for j in range(len(lm.columns))]
    for row in lm.rows:
        model.add_constr(lin_sum(row.coefs[j] * cols[j] for j in row.coefs), row.sense, _num(row.rhs), name=row.key)
    cost = lin_sum(_num(c.cost) * cols[j] for j, c in enumerate(lm.columns))
    model.set_objective(cost)

    first = solve_lp(model)
    if first.status == SolveStatus.INFEASIBLE:
        raise InfeasibleMarketError(lm.name, lm.scenario, "cannot restore balance within bounds and flow limits")
    if first.status != SolveStatus.OPTIMAL:
        raise ClearingError(f"{lm.label}: LP returned {first.status.value}")

    values = first.values
    if len(lm.columns) > 1:
        slack = max(1e-9, 1e-12 * abs(first.objective))
        model.add_constr(cost, Sense.LE, first.objective + slack, name="optimal_cost")
        model.set_objective(lin_sum(float(c.rank + 1) * cols[j] for j, c in enumerate(lm.columns)))
        second = solve_lp(model)
        if second.status == SolveStatus.OPTIMAL:
            values = second.values
        else:
            logger.debug(f"{lm.label}: tie-break pass returned {second.status.value}, keeping first optimum")
    values = np.where(np.abs(values) < 1e-10, 0.0, values)
    objective = sum(_num(c.cost) * float(values[j]) for j, c in enumerate(lm.columns))
    return values, first.duals, objective


def _num(q) -> float:
    if isinstance(q, (int, float)):
        return float(q)
    raise TypeError(f"direct clearing needs numeric data, got {type(q).__name__}")


def _profile_price(case: MarketCase, profile: StrategyProfile):
    return lambda family, rid: profile.price(case, family, rid)


# ---------------------------------------------------------------------------
# DAM
# ---------------------------------------------------------------------------
def dam_bids_from_profile(case: MarketCase, profile: StrategyProfile) -> Dict[str, float]:
    return {u.id: profile.price(case, "dam", u.id) for u in case.units}


def clear_dam(case: MarketCase, dam_bids: Mapping[str, float]) -> DamResult:
    """Pay-as-clear DAM; lambda is the smallest dual-feasible balance price."""
    if isinstance(dam_bids, StrategyProfile):
        dam_bids = dam_bids_from_profile(case, dam_bids)
    missing = [u.id for u in case.units if u.id not in dam_bids]
    if missing:
        raise ClearingError(f"no DAM bid for unit(s) {', '.join(missing)}")
    lm = dam_market(case, lambda family, uid: float(dam_bids[uid]))
    try:
        values, duals, objective = solve_market(lm)
    except InfeasibleMarketError:
        raise InfeasibleMarketError("DAM", None, "insufficient capacity for the net load") from None

    dispatch = {c.resource: float(values[j]) for j, c in enumerate(lm.columns)}
    price = float(duals[-1])
    accepted = [dam_bids[u] for u, g in dispatch.items() if g > settings.FEASIBILITY_TOL]
    if accepted:
        price = max(accepted)
    nu = {}
    for u in case.units:
        g = dispatch[u.id]
        nu[u.id] = max(0.0, price - dam_bids[u.id]) if g >= u.capacity - settings.FEASIBILITY_TOL else 0.0
    return DamResult(dispatch=dispatch, price=price, capacity_duals=nu, objective=objective)


# ---------------------------------------------------------------------------
# Services markets
# ---------------------------------------------------------------------------
def _asm_result(lm: LinearMarket, values, duals, objective) -> AsmResult:
    fields: Dict[str, Dict[str, float]] = {k: {} for k in
                                           ("up", "down", "curtail", "spill", "up_duals", "down_duals",
                                            "curtail_duals", "spill_duals", "flow_duals", "flows")}
    for j, c in enumerate(lm.columns):
        fields[QTY_NAME[c.kind]][c.resource] = float(values[j])
    alpha = 0.0
    for i, row in enumerate(lm.rows):
        if row.kind == "balance":
            alpha = float(duals[i])
            continue
        # <= rows: report the non-negative multiplier
        fields[DUAL_NAME[row.kind]][row.resource] = max(0.0, -float(duals[i]))
        if row.kind == "flow":
            activity = sum(a * float(values[j]) for j, a in row.coefs.items())
            fields["flows"][row.resource] = row.limit - _num(row.rhs) + activity
    return AsmResult(market=lm.name, scenario=lm.scenario, layer=lm.layer, balance_dual=alpha,
                     objective=objective, **fields)


def _clear(lm: LinearMarket) -> AsmResult:
    values, duals, objective = solve_market(lm)
    result = _asm_result(lm, values, duals, objective)
    logger.debug(f"{lm.label}: cost {objective:.2f}")
    return result


def _dam_dispatch(dam: DamResult):
    return lambda uid: float(dam.dispatch.get(uid, 0.0))


def _residual_from(dist_results: Iterable[AsmResult]):
    table: Dict[Tuple[str, str], float] = {}
    for res in dist_results:
        for kind in ("up", "down", "curtail", "spill"):
            for rid, q in getattr(res, kind).items():
                table[(kind, rid)] = table.get((kind, rid), 0.0) + q
    return lambda kind, rid: table.get((kind, rid), 0.0)


def clear_asm_common(case: MarketCase, dam: DamResult, asm_bids: StrategyProfile, scenario: str) -> AsmResult:
    """Scheme A: one market over the whole system and all lines."""
    lm = asm_market(case, Scheme.A, "A", scenario, _profile_price(case, asm_bids), _dam_dispatch(dam))
    return _clear(lm)


def clear_asm_distribution(case: MarketCase, dam: DamResult, asm_bids: StrategyProfile, scenario: str,
                           k: str, scheme: Scheme = Scheme.B) -> AsmResult:
    """Local market of distribution system ``k`` (schemes B and C)."""
    scheme = Scheme.parse(scheme)
    if scheme == Scheme.A:
        raise ClearingError("scheme A has no distribution markets")
    lm = asm_market(case, scheme, k, scenario, _profile_price(case, asm_bids), _dam_dispatch(dam))
    return _clear(lm)


def clear_asm_transmission_B(case: MarketCase, dam: DamResult, asm_bids: StrategyProfile, scenario: str,
                             dist_results: Optional[Sequence[AsmResult]] = None) -> AsmResult:
    """Scheme B transmission market: T resources only, flows over all nodes.

    Distribution-node injections include the local markets' re-dispatch when
    ``dist_results`` is given, otherwise they stay at the DAM schedule.
    """
    residual = _residual_from(dist_results) if dist_results is not None else None
    lm = asm_market(case, Scheme.B, TRANSMISSION, scenario, _profile_price(case, asm_bids),
                    _dam_dispatch(dam), residual)
    return _clear(lm)


def clear_asm_transmission_C(case: MarketCase, dam: DamResult, dist_results: Sequence[AsmResult],
                             asm_bids: StrategyProfile, scenario: str) -> AsmResult:
    """Scheme C transmission market over all resources with residual bounds."""
    have = {r.market for r in dist_results}
    missing = [k for k in case.network.distribution_systems if k not in have]
    if missing:
        raise ClearingError(f"missing distribution results for {', '.join(missing)}")
    lm = asm_market(case, Scheme.C, TRANSMISSION, scenario, _profile_price(case, asm_bids),
                    _dam_dispatch(dam), _residual_from(dist_results))
    return _clear(lm)


def clear_scenario(case: MarketCase, scheme: Scheme, dam: DamResult, profile: StrategyProfile,
                   scenario: str) -> ScenarioOutcome:
    scheme = Scheme.parse(scheme)
    if scheme == Scheme.A:
        markets = [clear_asm_common(case, dam, profile, scenario)]
    else:
        dist = [clear_asm_distribution(case, dam, profile, scenario, k, scheme)
                for k in case.network.distribution_systems]
        if scheme == Scheme.B:
            trans = clear_asm_transmission_B(case, dam, profile, scenario, dist)
        else:
            trans = clear_asm_transmission_C(case, dam, dist, profile, scenario)
        markets = [trans] + dist
    return ScenarioOutcome(scenario=scenario, markets=tuple(markets))


def clear_scheme(case: MarketCase, scheme: Scheme, profile: StrategyProfile,
                 dam: Optional[DamResult] = None) -> CascadeResult:
    """DAM followed by every scenario's services markets."""
    scheme = Scheme.parse(scheme)
    dam = dam or clear_dam(case, dam_bids_from_profile(case, profile))
    outcomes = tuple(clear_scenario(case, scheme, dam, profile, s) for s in case.scenario_ids())
    return CascadeResult(scheme=scheme, dam=dam, outcomes=outcomes)


# ---------------------------------------------------------------------------
# Costs and profits
# ---------------------------------------------------------------------------
def expected_cost(costs: Mapping[str, float], probabilities: Mapping[str, float]) -> CostSummary:
    per = {s: float(costs[s]) for s in probabilities}
    return CostSummary(per_scenario=per, expected=sum(probabilities[s] * per[s] for s in probabilities))


def system_cost(scheme: Scheme, outcomes: Sequence[ScenarioOutcome],
                probabilities: Mapping[str, float]) -> CostSummary:
    """Per-scenario services cost (sum of the scheme's market objectives) and its expectation."""
    scheme = Scheme.parse(scheme)
    costs = {}
    for o in outcomes:
        if scheme == Scheme.A and len(o.markets) != 1:
            raise ClearingError(f"scheme A expects one market per scenario, got {len(o.markets)}")
        costs[o.scenario] = o.cost
    missing = [s for s in probabilities if s not in costs]
    if missing:
        raise ClearingError(f"no results for scenario(s) {', '.join(missing)}")
    return expected_cost(costs, probabilities)


def cost_ratios(expected: Mapping[str, float], reference: str = "B") -> Dict[str, float]:
    """Expected cost of every scheme relative to ``reference``."""
    base = expected[reference]
    return {k: v / base for k, v in expected.items() if k != reference}


def aggregator_profit(case: MarketCase, scheme: Scheme, aggregator: str, result: CascadeResult,
                      profile: StrategyProfile) -> float:
    """Expected profit of one aggregator at a cleared profile."""
    scheme = Scheme.parse(scheme)
    units = case.units_of(aggregator)
    loads = case.flexible_loads_of(aggregator)
    lam = result.dam.price
    profit = sum((lam - u.cost) * result.dam.dispatch.get(u.id, 0.0) for u in units)
    probs = case.scenarios.probabilities()
    for outcome in result.outcomes:
        sigma = probs[outcome.scenario]
        for market in outcome.markets:
            up_f, down_f, curt_f = market_families(scheme, market.market)
            for u in units:
                if u.id in market.up:
                    profit += sigma * (profile.price(case, up_f, u.id) - u.up_cost) * market.up[u.id]
                if u.id in market.down:
                    profit += sigma * (u.down_cost - profile.price(case, down_f, u.id)) * market.down[u.id]
            for d in loads:
                if d.id in market.curtail:
                    profit += sigma * (profile.price(case, curt_f, d.id) - lam) * market.curtail[d.id]
    return profit


def all_profits(case: MarketCase, scheme: Scheme, result: CascadeResult,
                profile: StrategyProfile) -> Dict[str, float]:
    return {agg: aggregator_profit(case, scheme, agg, result, profile) for agg in case.aggregators}


def boundary_exchange(case: MarketCase, k: str, injections: Mapping[str, float]) -> float:
    """Net injection of distribution system ``k`` toward transmission."""
    return sum(v for n, v in injections.items() if case.subsystem_of(n) == k)


def post_market_injections(case: MarketCase, dam: DamResult, scenario: str,
                           markets: List[AsmResult]) -> Dict[str, float]:
    inj = realized_injections(case, dam, scenario)
    for res in markets:
        for uid, q in res.up.items():
            inj[case.unit(uid).node] += q
        for uid, q in res.down.items():
            inj[case.unit(uid).node] -= q
        for lid, q in res.curtail.items():
            inj[case.load(lid).node] += q
        for r in case.renewables:
            if r.id in res.spill:
                inj[r.node] -= res.spill[r.id]
    return inj
