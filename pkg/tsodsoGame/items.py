"""
Record types shared across the package.

Everything here is an immutable pydantic model: the case description
(``MarketCase`` and its parts), strategy profiles, and the results produced
by clearing and by the equilibrium loop.
"""

from enum import Enum
from functools import cached_property
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from tsodsoGame.exceptions import CaseError, MissingPriceError, UnsupportedSchemeError


class Record(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


# ---------------------------------------------------------------------------
# Enumerations
# ---------------------------------------------------------------------------
class Scheme(str, Enum):
    A = "A"     # one common services market
    B = "B"     # separate T and D_k markets
    C = "C"     # D_k markets first, residual offered to T

    @classmethod
    def parse(cls, tag) -> "Scheme":
        if isinstance(tag, cls):
            return tag
        try:
            return cls(str(tag).upper())
        except ValueError:
            raise UnsupportedSchemeError(f"unsupported scheme {tag!r} (expected A, B or C)") from None


class LadderRole(str, Enum):
    DAM = "dam-sale"
    UP = "up-regulation"
    DOWN = "down-regulation"
    CURTAIL = "load-curtailment"


UNIT_ROLES = (LadderRole.DAM, LadderRole.UP, LadderRole.DOWN)

# price family -> ladder it draws from
FAMILY_ROLE: Dict[str, LadderRole] = {
    "dam":       LadderRole.DAM,
    "up":        LadderRole.UP,
    "down":      LadderRole.DOWN,
    "curtail":   LadderRole.CURTAIL,
    "up_d":      LadderRole.UP,
    "down_d":    LadderRole.DOWN,
    "curtail_d": LadderRole.CURTAIL,
    "up_t":      LadderRole.UP,
    "down_t":    LadderRole.DOWN,
    "curtail_t": LadderRole.CURTAIL,
}

TRANSMISSION = "T"


# ---------------------------------------------------------------------------
# Case description
# ---------------------------------------------------------------------------
class Node(Record):
    id: str
    subsystem: str              # "T" | "D1" | "D2" | ...


class Line(Record):
    id: str
    subsystem: str
    from_node: str
    to_node: str
    limit: float                # MW


class Network(Record):
    nodes: Tuple[Node, ...]
    lines: Tuple[Line, ...]
    ptdf: Tuple[Tuple[float, ...], ...]     # rows follow ``lines``, columns follow ``nodes``

    @cached_property
    def node_ids(self) -> List[str]:
        return [n.id for n in self.nodes]

    @cached_property
    def node_position(self) -> Dict[str, int]:
        return {n.id: k for k, n in enumerate(self.nodes)}

    @cached_property
    def line_ids(self) -> List[str]:
        return [ln.id for ln in self.lines]

    @cached_property
    def H(self) -> np.ndarray:
        H = np.array(self.ptdf, dtype=float)
        return H.reshape(len(self.lines), len(self.nodes)) if H.size == 0 else H

    @cached_property
    def subsystems(self) -> List[str]:
        """``T`` first, then distribution systems in order of appearance."""
        seen = [TRANSMISSION]
        for n in self.nodes:
            if n.subsystem not in seen:
                seen.append(n.subsystem)
        return seen

    @property
    def distribution_systems(self) -> List[str]:
        return [s for s in self.subsystems if s != TRANSMISSION]

    def subsystem_of(self, node_id: str) -> str:
        return self.nodes[self.node_position[node_id]].subsystem

    def nodes_in(self, subsystem: str) -> List[str]:
        return [n.id for n in self.nodes if n.subsystem == subsystem]

    def lines_in(self, subsystem: str) -> List[Line]:
        return [ln for ln in self.lines if ln.subsystem == subsystem]


class ProgrammableUnit(Record):
    id: str
    node: str
    owner: Optional[str] = None
    capacity: float             # G_u
    cost: float                 # C_u
    up_cost: float              # C^up_u
    down_cost: float            # C^down_u


class RenewableUnit(Record):
    id: str
    node: str
    forecast: float                     # W_r
    realized: Dict[str, float]          # scenario -> realized output


class LoadPoint(Record):
    id: str
    node: str
    forecast: float                     # D_n
    realized: Dict[str, float]          # scenario -> realized load
    delta: float = 0.0                  # curtailable fraction
    owner: Optional[str] = None

    @property
    def flexible(self) -> bool:
        return self.delta > 0.0


class BidLadder(Record):
    resource: str
    role: LadderRole
    prices: Tuple[float, ...]


class Scenario(Record):
    id: str
    probability: float


class ScenarioSet(Record):
    scenarios: Tuple[Scenario, ...]

    @property
    def ids(self) -> List[str]:
        return [s.id for s in self.scenarios]

    def probability(self, scenario: str) -> float:
        for s in self.scenarios:
            if s.id == scenario:
                return s.probability
        raise CaseError(f"unknown scenario {scenario!r}")

    def probabilities(self) -> Dict[str, float]:
        return {s.id: s.probability for s in self.scenarios}


class MarketCase(Record):
    name: str = "case"
    network: Network
    units: Tuple[ProgrammableUnit, ...]
    renewables: Tuple[RenewableUnit, ...] = ()
    loads: Tuple[LoadPoint, ...] = ()
    ladders: Tuple[BidLadder, ...]
    scenarios: ScenarioSet
    aggregators: Tuple[str, ...]
    provenance: Dict[str, str] = {}

    @cached_property
    def unit_index(self) -> Dict[str, ProgrammableUnit]:
        return {u.id: u for u in self.units}

    @cached_property
    def load_index(self) -> Dict[str, LoadPoint]:
        return {d.id: d for d in self.loads}

    @cached_property
    def ladder_index(self) -> Dict[Tuple[str, LadderRole], BidLadder]:
        return {(b.resource, b.role): b for b in self.ladders}

    def unit(self, uid: str) -> ProgrammableUnit:
        return self.unit_index[uid]

    def load(self, lid: str) -> LoadPoint:
        return self.load_index[lid]

    def ladder(self, resource: str, role: LadderRole) -> BidLadder:
        try:
            return self.ladder_index[(resource, role)]
        except KeyError:
            raise MissingPriceError(f"no {role.value} ladder for {resource!r}") from None

    @property
    def flexible_loads(self) -> List[LoadPoint]:
        return [d for d in self.loads if d.flexible]

    def units_of(self, aggregator: str) -> List[ProgrammableUnit]:
        return [u for u in self.units if u.owner == aggregator]

    def flexible_loads_of(self, aggregator: str) -> List[LoadPoint]:
        return [d for d in self.flexible_loads if d.owner == aggregator]

    def subsystem_of(self, node_id: str) -> str:
        return self.network.subsystem_of(node_id)

    def in_distribution(self, resource) -> bool:
        return self.subsystem_of(resource.node) != TRANSMISSION

    def scenario_ids(self) -> List[str]:
        return self.scenarios.ids

    def families(self, scheme: "Scheme") -> List[str]:
        """Price families a scheme clears."""
        if Scheme.parse(scheme) == Scheme.C:
            return ["dam", "up_d", "down_d", "curtail_d", "up_t", "down_t", "curtail_t"]
        return ["dam", "up", "down", "curtail"]

    def bidding_slots(self, scheme: "Scheme", aggregator: Optional[str] = None) -> List[Tuple[str, str]]:
        """(family, resource) pairs that carry a price, in canonical order.

        Order: aggregators in roster order; inside one aggregator, families in
        market order, units before loads.
        """
        scheme = Scheme.parse(scheme)
        owners = [aggregator] if aggregator is not None else list(self.aggregators)
        slots: List[Tuple[str, str]] = []
        for agg in owners:
            units = self.units_of(agg)
            loads = self.flexible_loads_of(agg)
            for fam in self.families(scheme):
                role = FAMILY_ROLE[fam]
                if role == LadderRole.CURTAIL:
                    pool = loads
                else:
                    pool = units
                if fam.endswith("_d"):
                    pool = [r for r in pool if self.in_distribution(r)]
                slots.extend((fam, r.id) for r in pool)
        return slots


# ---------------------------------------------------------------------------
# Strategies
# ---------------------------------------------------------------------------
def slot_key(family: str, resource: str) -> str:
    return f"{family}/{resource}"


class StrategyProfile(Record):
    """Selected candidate index per (family, resource)."""

    choices: Dict[str, int] = {}

    def index(self, family: str, resource: str) -> int:
        try:
            return self.choices[slot_key(family, resource)]
        except KeyError:
            raise MissingPriceError(f"no {family} price selected for {resource!r}") from None

    def price(self, case: MarketCase, family: str, resource: str) -> float:
        ladder = case.ladder(resource, FAMILY_ROLE[family])
        idx = self.index(family, resource)
        if not 0 <= idx < len(ladder.prices):
            raise MissingPriceError(f"{family} index {idx} outside the ladder of {resource!r}")
        return ladder.prices[idx]

    def has(self, family: str, resource: str) -> bool:
        return slot_key(family, resource) in self.choices

    def updated(self, choices: Mapping[str, int]) -> "StrategyProfile":
        merged = dict(self.choices)
        merged.update(choices)
        return StrategyProfile(choices=merged)

    def restricted(self, keys) -> "StrategyProfile":
        keys = set(keys)
        return StrategyProfile(choices={k: v for k, v in self.choices.items() if k in keys})

    def slice_of(self, case: MarketCase, scheme: Scheme, aggregator: str) -> Dict[str, int]:
        return {slot_key(f, r): self.index(f, r) for f, r in case.bidding_slots(scheme, aggregator)}

    def signature(self) -> Tuple[Tuple[str, int], ...]:
        return tuple(sorted(self.choices.items()))


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------
class DamResult(Record):
    dispatch: Dict[str, float]          # g_u
    price: float                        # lambda
    capacity_duals: Dict[str, float]    # nu_u
    objective: float


class AsmResult(Record):
    market: str                         # "A", "T", "D1", ...
    scenario: str
    layer: Optional[str] = None         # scheme C: "D" or "T"
    up: Dict[str, float] = {}
    down: Dict[str, float] = {}
    curtail: Dict[str, float] = {}
    spill: Dict[str, float] = {}        # renewable curtailment
    balance_dual: float = 0.0           # alpha
    up_duals: Dict[str, float] = {}     # beta
    down_duals: Dict[str, float] = {}   # phi
    curtail_duals: Dict[str, float] = {}  # gamma
    spill_duals: Dict[str, float] = {}  # chi
    flow_duals: Dict[str, float] = {}   # mu
    flows: Dict[str, float] = {}        # post-market flows on the market's lines
    objective: float = 0.0


class ScenarioOutcome(Record):
    scenario: str
    markets: Tuple[AsmResult, ...]

    @property
    def cost(self) -> float:
        return sum(m.objective for m in self.markets)


class CascadeResult(Record):
    scheme: Scheme
    dam: DamResult
    outcomes: Tuple[ScenarioOutcome, ...]

    def outcome(self, scenario: str) -> ScenarioOutcome:
        for o in self.outcomes:
            if o.scenario == scenario:
                return o
        raise CaseError(f"unknown scenario {scenario!r}")


class CostSummary(Record):
    per_scenario: Dict[str, float]
    expected: float


class TraceEntry(Record):
    iteration: int
    aggregator: str
    old: Dict[str, int]
    new: Dict[str, int]
    profit: float                       # best-response profit
    incumbent_profit: float
    changed: bool


class EquilibriumReport(Record):
    scheme: Scheme
    profile: StrategyProfile
    converged: bool
    cycled: bool = False
    iterations: int
    trace: Tuple[TraceEntry, ...] = ()
    costs: Optional[CostSummary] = None
    nash_certified: bool = False
    improvements: Dict[str, float] = {}
