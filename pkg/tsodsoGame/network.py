"""
Derived quantities of a market case: imbalances, PTDF flows, net load, and
case validation.
"""

import logging
import math
from collections import Counter
from typing import Dict, List, Mapping

import numpy as np
from pydantic import BaseModel

from tsodsoGame import settings
from tsodsoGame.exceptions import CaseError, Issue
from tsodsoGame.items import (
    TRANSMISSION,
    UNIT_ROLES,
    DamResult,
    LadderRole,
    MarketCase,
)

logger = logging.getLogger(__name__)


class Imbalances(BaseModel):
    total: float
    transmission: float
    distribution: Dict[str, float]

    def of(self, subsystem: str) -> float:
        return self.transmission if subsystem == TRANSMISSION else self.distribution[subsystem]


class ValidationReport(BaseModel):
    errors: List[Issue] = []
    warnings: List[Issue] = []

    @property
    def ok(self) -> bool:
        return not self.errors


# ---------------------------------------------------------------------------
# Imbalances / flows / net load
# ---------------------------------------------------------------------------
def subsystem_imbalance(case: MarketCase, scenario: str, subsystem: str) -> float:
    """Realized-minus-forecast net load of one subsystem."""
    delta = 0.0
    for d in case.loads:
        if case.subsystem_of(d.node) == subsystem:
            delta += d.realized[scenario] - d.forecast
    for r in case.renewables:
        if case.subsystem_of(r.node) == subsystem:
            delta += r.forecast - r.realized[scenario]
    return delta


def compute_imbalances(case: MarketCase, scenario: str) -> Imbalances:
    if scenario not in case.scenario_ids():
        raise CaseError(f"unknown scenario {scenario!r}")
    dist = {k: subsystem_imbalance(case, scenario, k) for k in case.network.distribution_systems}
    trans = subsystem_imbalance(case, scenario, TRANSMISSION)
    # total is assembled from the parts so the decomposition holds bit for bit
    total = trans
    for k in case.network.distribution_systems:
        total += dist[k]
    return Imbalances(total=total, transmission=trans, distribution=dist)


def injection_vector(case: MarketCase, injections: Mapping[str, float]) -> np.ndarray:
    pos = case.network.node_position
    p = np.zeros(len(case.network.nodes))
    for node, mw in injections.items():
        p[pos[node]] += mw
    return p


def ptdf_flows(case: MarketCase, injections: Mapping[str, float]) -> Dict[str, float]:
    flows = case.network.H @ injection_vector(case, injections)
    return {lid: float(f) for lid, f in zip(case.network.line_ids, flows)}


def net_load(case: MarketCase) -> float:
    return sum(d.forecast for d in case.loads) - sum(r.forecast for r in case.renewables)


def forecast_injections(case: MarketCase, dam: DamResult) -> Dict[str, float]:
    inj = {n: 0.0 for n in case.network.node_ids}
    for u in case.units:
        inj[u.node] += dam.dispatch.get(u.id, 0.0)
    for r in case.renewables:
        inj[r.node] += r.forecast
    for d in case.loads:
        inj[d.node] -= d.forecast
    return inj


def realized_injections(case: MarketCase, dam: DamResult, scenario: str) -> Dict[str, float]:
    """Nodal injections with the DAM schedule and the scenario's realized loads and renewables."""
    inj = {n: 0.0 for n in case.network.node_ids}
    for u in case.units:
        inj[u.node] += dam.dispatch.get(u.id, 0.0)
    for r in case.renewables:
        inj[r.node] += r.realized[scenario]
    for d in case.loads:
        inj[d.node] -= d.realized[scenario]
    return inj


def dam_flows(case: MarketCase, dam: DamResult) -> Dict[str, float]:
    """Line flows of the DAM schedule at forecast loads and renewables."""
    return ptdf_flows(case, forecast_injections(case, dam))


def overloaded_lines(case: MarketCase, flows: Mapping[str, float]) -> List[str]:
    return [ln.id for ln in case.network.lines if flows[ln.id] > ln.limit + settings.FEASIBILITY_TOL]


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------
def validate_case(case: MarketCase) -> ValidationReport:
    """Collect every invariant violation; errors are fatal, warnings advisory."""
    errors: List[Issue] = []
    warnings: List[Issue] = []
    net = case.network

    def dupes(section, ids):
        for rid, n in Counter(ids).items():
            if n > 1:
                errors.append(Issue(section, rid, "duplicate id"))

    dupes("network.nodes", [n.id for n in net.nodes])
    dupes("network.lines", [ln.id for ln in net.lines])
    dupes("units", [u.id for u in case.units])
    dupes("renewables", [r.id for r in case.renewables])
    dupes("loads", [d.id for d in case.loads])
    dupes("scenarios", case.scenario_ids())
    dupes("aggregators", list(case.aggregators))

    nodes = {n.id: n.subsystem for n in net.nodes}
    subsystems = set(nodes.values())
    if nodes and TRANSMISSION not in subsystems:
        errors.append(Issue("network.nodes", "subsystem", "no transmission (T) node"))
    for s in subsystems - {TRANSMISSION}:
        if not (s.startswith("D") and s[1:].isdigit()):
            errors.append(Issue("network.nodes", s, "subsystem must be T or D<k>"))

    for ln in net.lines:
        for end in (ln.from_node, ln.to_node):
            if end not in nodes:
                errors.append(Issue("network.lines", ln.id, f"dangling reference to node {end!r}"))
        if ln.from_node in nodes and ln.to_node in nodes:
            if nodes[ln.from_node] != nodes[ln.to_node]:
                errors.append(Issue("network.lines", ln.id, "endpoints in different subsystems"))
            elif nodes[ln.from_node] != ln.subsystem:
                errors.append(Issue("network.lines", ln.id, "subsystem differs from its endpoints"))
        if not ln.limit > 0.0:
            errors.append(Issue("network.lines", ln.id, "flow limit must be positive"))

    if len(net.ptdf) != len(net.lines) or any(len(row) != len(net.nodes) for row in net.ptdf):
        errors.append(Issue("network", "ptdf", f"must be {len(net.lines)} x {len(net.nodes)}"))

    roster = set(case.aggregators)
    scenarios = case.scenario_ids()

    for u in case.units:
        if u.node not in nodes:
            errors.append(Issue("units", u.id, f"dangling reference to node {u.node!r}"))
        if u.owner is None:
            errors.append(Issue("units", u.id, "programmable unit has no owner"))
        elif u.owner not in roster:
            errors.append(Issue("units", u.id, f"dangling reference to aggregator {u.owner!r}"))
        if not u.capacity > 0.0:
            errors.append(Issue("units", u.id, "capacity must be positive"))
        if not (u.up_cost >= u.cost >= u.down_cost >= 0.0):
            warnings.append(Issue("units", u.id, "cost ordering up >= energy >= down >= 0 violated"))

    for r in case.renewables:
        if r.node not in nodes:
            errors.append(Issue("renewables", r.id, f"dangling reference to node {r.node!r}"))
        if r.forecast < 0.0:
            errors.append(Issue("renewables", r.id, "negative forecast"))
        _check_realized(errors, "renewables", r.id, r.realized, scenarios)

    for d in case.loads:
        if d.node not in nodes:
            errors.append(Issue("loads", d.id, f"dangling reference to node {d.node!r}"))
        if d.forecast < 0.0:
            errors.append(Issue("loads", d.id, "negative forecast"))
        if not 0.0 <= d.delta <= 1.0:
            errors.append(Issue("loads", d.id, "curtailable fraction outside [0, 1]"))
        _check_realized(errors, "loads", d.id, d.realized, scenarios)
        if d.flexible:
            if d.owner is None:
                errors.append(Issue("loads", d.id, "flexible load has no owner"))
            elif d.owner not in roster:
                errors.append(Issue("loads", d.id, f"dangling reference to aggregator {d.owner!r}"))
        elif d.owner is not None:
            warnings.append(Issue("loads", d.id, "owner set on an inflexible load is ignored"))

    unit_ids = {u.id for u in case.units}
    flex_ids = {d.id for d in case.loads if d.flexible}
    load_ids = {d.id for d in case.loads}
    seen = Counter()
    for b in case.ladders:
        key = f"{b.resource}:{b.role.value}"
        seen[(b.resource, b.role)] += 1
        if b.resource not in unit_ids and b.resource not in load_ids:
            errors.append(Issue("ladders", key, f"dangling reference to resource {b.resource!r}"))
        elif b.role == LadderRole.CURTAIL and b.resource not in flex_ids:
            errors.append(Issue("ladders", key, "curtailment ladder on a non-flexible resource"))
        elif b.role != LadderRole.CURTAIL and b.resource not in unit_ids:
            errors.append(Issue("ladders", key, "unit ladder on a load"))
        if not b.prices:
            errors.append(Issue("ladders", key, "empty candidate list"))
        if any(not p > 0.0 for p in b.prices):
            errors.append(Issue("ladders", key, "candidate prices must be positive"))
        if len(set(b.prices)) != len(b.prices):
            errors.append(Issue("ladders", key, "duplicate candidate prices"))
    for (res, role), n in seen.items():
        if n > 1:
            errors.append(Issue("ladders", f"{res}:{role.value}", "ladder declared twice"))
    for u in case.units:
        for role in UNIT_ROLES:
            if (u.id, role) not in seen:
                errors.append(Issue("ladders", u.id, f"missing {role.value} ladder"))
    for d in case.loads:
        if d.flexible and (d.id, LadderRole.CURTAIL) not in seen:
            errors.append(Issue("ladders", d.id, "missing load-curtailment ladder"))

    probs = [s.probability for s in case.scenarios.scenarios]
    if not probs:
        errors.append(Issue("scenarios", "scenarios", "no scenarios"))
    for s in case.scenarios.scenarios:
        if s.probability < 0.0:
            errors.append(Issue("scenarios", s.id, "negative probability"))
    if probs and not math.isclose(sum(probs), 1.0, rel_tol=0.0, abs_tol=settings.PROBABILITY_TOL):
        errors.append(Issue("scenarios", "probability", f"probabilities not normalized (sum {sum(probs):.9g})"))

    for agg in case.aggregators:
        if not case.units_of(agg) and not case.flexible_loads_of(agg):
            warnings.append(Issue("aggregators", agg, "aggregator owns no resources"))

    if errors:
        logger.debug(f"case {case.name}: {len(errors)} error(s), {len(warnings)} warning(s)")
    return ValidationReport(errors=errors, warnings=warnings)


def _check_realized(errors, section, rid, realized, scenarios):
    for s in scenarios:
        if s not in realized:
            errors.append(Issue(section, rid, f"no realization for scenario {s!r}"))
        elif realized[s] < 0.0:
            errors.append(Issue(section, rid, f"negative realization in scenario {s!r}"))
    for s in realized:
        if s not in scenarios:
            errors.append(Issue(section, rid, f"realization for unknown scenario {s!r}"))
