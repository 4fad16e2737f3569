"""
Follower problems as data.

Each market (the DAM, or one services market of a scheme in one scenario) is
described once as a ``LinearMarket``: non-negative columns with a unit cost,
``<=`` bound/flow rows and one balance equality. Costs and right-hand sides
may be plain floats (direct clearing) or ``LinExpr`` over the variables of
an enclosing model (the MPEC embeds the same description through its KKT
conditions). The builders below never look at which of the two they get.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple, Union

from tsodsoGame.exceptions import ClearingError
from tsodsoGame.items import TRANSMISSION, MarketCase, Scheme
from tsodsoGame.milp.model import LinExpr, Sense, Var
from tsodsoGame.network import compute_imbalances, net_load

Quantity = Union[float, LinExpr, Var]
PriceFn = Callable[[str, str], Quantity]              # (family, resource) -> price
DispatchFn = Callable[[str], Quantity]                # unit -> DAM quantity
ResidualFn = Callable[[str, str], Quantity]           # (kind, resource) -> D-market quantity

# direction of each column kind in balance and flow rows
DIRECTION = {"up": 1.0, "down": -1.0, "curtail": 1.0, "spill": -1.0}


@dataclass
class Column:
    key: str                    # "up[U1]"
    kind: str                   # g | up | down | curtail | spill
    resource: str
    node: str
    cost: Quantity
    cap: float                  # static upper bound of the quantity
    rank: int                   # tie-break order, lower is preferred


@dataclass
class Row:
    key: str                    # "up_cap[U1]", "balance", "flow[L3]"
    kind: str                   # cap | up_cap | down_cap | curtail_cap | spill_cap | balance | flow
    coefs: Dict[int, float]
    sense: Sense
    rhs: Quantity
    resource: Optional[str] = None
    limit: float = 0.0          # flow rows: the line limit


@dataclass
class LinearMarket:
    name: str                   # "DAM", "A", "T", "D1", ...
    scenario: Optional[str] = None
    layer: Optional[str] = None
    families: Tuple[str, str, str] = ("up", "down", "curtail")
    columns: List[Column] = field(default_factory=list)
    rows: List[Row] = field(default_factory=list)

    def add_column(self, kind, resource, node, cost, cap, rank) -> int:
        self.columns.append(Column(f"{kind}[{resource}]", kind, resource, node, cost, cap, rank))
        return len(self.columns) - 1

    def add_row(self, key, kind, coefs, sense, rhs, resource=None, limit=0.0) -> int:
        self.rows.append(Row(key, kind, coefs, sense, rhs, resource, limit))
        return len(self.rows) - 1

    def column(self, kind: str, resource: str) -> int:
        for j, c in enumerate(self.columns):
            if c.kind == kind and c.resource == resource:
                return j
        raise KeyError(f"{self.name}: no {kind} column for {resource}")

    def has_column(self, kind: str, resource: str) -> bool:
        return any(c.kind == kind and c.resource == resource for c in self.columns)

    @property
    def label(self) -> str:
        return self.name if self.scenario is None else f"{self.name}@{self.scenario}"


def market_families(scheme: Scheme, market: str) -> Tuple[str, str, str]:
    """Price families (up, down, curtail) used by one services market."""
    if scheme == Scheme.C:
        return ("up_t", "down_t", "curtail_t") if market == TRANSMISSION else ("up_d", "down_d", "curtail_d")
    return ("up", "down", "curtail")


def _ranks(case: MarketCase) -> Dict[str, int]:
    ids = [u.id for u in case.units] + [d.id for d in case.loads] + [r.id for r in case.renewables]
    return {rid: k for k, rid in enumerate(ids)}


# ---------------------------------------------------------------------------
# DAM
# ---------------------------------------------------------------------------
def dam_market(case: MarketCase, price: PriceFn) -> LinearMarket:
    """min sum b_u g_u  s.t.  g_u <= G_u,  sum g_u = net load."""
    lm = LinearMarket("DAM")
    rank = _ranks(case)
    for u in case.units:
        j = lm.add_column("g", u.id, u.node, price("dam", u.id), u.capacity, rank[u.id])
        lm.add_row(f"cap[{u.id}]", "cap", {j: 1.0}, Sense.LE, u.capacity, u.id)
    lm.add_row("balance", "balance", {j: 1.0 for j in range(len(lm.columns))}, Sense.EQ, net_load(case))
    return lm


# ---------------------------------------------------------------------------
# Services markets
# ---------------------------------------------------------------------------
def asm_market(case: MarketCase, scheme: Scheme, market: str, scenario: str,
               price: PriceFn, dam_g: DispatchFn, residual: Optional[ResidualFn] = None) -> LinearMarket:
    """One services market in one scenario.

    ``market`` is ``"A"`` for the common market, ``"T"`` for a transmission
    market (schemes B and C) or a distribution system id (``"D1"``, ...).
    ``residual`` supplies the distribution markets' re-dispatch; it is
    required for the transmission market of scheme C and optional for B.
    """
    scheme = Scheme.parse(scheme)
    net = case.network
    imb = compute_imbalances(case, scenario)
    residual_bounds = scheme == Scheme.C and market == TRANSMISSION
    if residual_bounds and residual is None:
        raise ClearingError("scheme C transmission market needs the distribution re-dispatch")

    if market == "A":
        layer, delta, line_set = None, imb.total, list(net.lines)
        flow_nodes = set(net.node_ids)
        member = lambda node: True                                       # noqa: E731
    elif market == TRANSMISSION:
        layer, delta, line_set = ("T" if scheme == Scheme.C else None), imb.transmission, net.lines_in(TRANSMISSION)
        flow_nodes = set(net.node_ids)
        if scheme == Scheme.C:
            member = lambda node: True                                   # noqa: E731
        else:
            member = lambda node: case.subsystem_of(node) == TRANSMISSION  # noqa: E731
    else:
        if market not in net.distribution_systems:
            raise ClearingError(f"unknown market {market!r}")
        layer = "D" if scheme == Scheme.C else None
        delta, line_set = imb.distribution[market], net.lines_in(market)
        flow_nodes = set(net.nodes_in(market))
        member = lambda node: case.subsystem_of(node) == market           # noqa: E731

    up_f, down_f, curt_f = market_families(scheme, market)
    lm = LinearMarket(market, scenario, layer, (up_f, down_f, curt_f))
    rank = _ranks(case)
    is_dist = lambda node: case.subsystem_of(node) != TRANSMISSION      # noqa: E731

    for u in case.units:
        if not member(u.node):
            continue
        up_cap = u.capacity - dam_g(u.id)
        down_cap = dam_g(u.id)
        if residual_bounds and is_dist(u.node):
            up_cap = up_cap - residual("up", u.id) + residual("down", u.id)
            down_cap = down_cap + residual("up", u.id) - residual("down", u.id)
        j = lm.add_column("up", u.id, u.node, price(up_f, u.id), u.capacity, 2 * rank[u.id])
        lm.add_row(f"up_cap[{u.id}]", "up_cap", {j: 1.0}, Sense.LE, up_cap, u.id)
        j = lm.add_column("down", u.id, u.node, -1.0 * price(down_f, u.id), u.capacity, 2 * rank[u.id] + 1)
        lm.add_row(f"down_cap[{u.id}]", "down_cap", {j: 1.0}, Sense.LE, down_cap, u.id)

    for d in case.flexible_loads:
        if not member(d.node):
            continue
        cap = d.delta * d.realized[scenario]
        if residual_bounds and is_dist(d.node):
            cap = cap - residual("curtail", d.id)
        static = d.delta * max(d.realized.values())
        j = lm.add_column("curtail", d.id, d.node, price(curt_f, d.id), static, 2 * rank[d.id])
        lm.add_row(f"curtail_cap[{d.id}]", "curtail_cap", {j: 1.0}, Sense.LE, cap, d.id)

    for r in case.renewables:
        if not member(r.node):
            continue
        cap = r.realized[scenario]
        if residual_bounds and is_dist(r.node):
            cap = cap - residual("spill", r.id)
        j = lm.add_column("spill", r.id, r.node, 0.0, max(r.realized.values()), 2 * rank[r.id])
        lm.add_row(f"spill_cap[{r.id}]", "spill_cap", {j: 1.0}, Sense.LE, cap, r.id)

    lm.add_row("balance", "balance", {j: DIRECTION[c.kind] for j, c in enumerate(lm.columns)}, Sense.EQ, delta)

    if line_set:
        base = _base_injections(case, scenario, dam_g, flow_nodes,
                                residual if (market == TRANSMISSION and residual is not None) else None)
        pos = net.node_position
        line_pos = {lid: k for k, lid in enumerate(net.line_ids)}
        H = net.H
        for ln in line_set:
            h = H[line_pos[ln.id]]
            coefs = {}
            for j, c in enumerate(lm.columns):
                if c.node in flow_nodes and h[pos[c.node]] != 0.0:
                    coefs[j] = DIRECTION[c.kind] * float(h[pos[c.node]])
            flow0 = LinExpr()
            for node, inj in base.items():
                if h[pos[node]] != 0.0:
                    flow0 = flow0 + float(h[pos[node]]) * inj
            rhs = ln.limit - flow0
            if rhs.is_constant:
                rhs = rhs.constant
            lm.add_row(f"flow[{ln.id}]", "flow", coefs, Sense.LE, rhs, ln.id, ln.limit)
    return lm


def _base_injections(case: MarketCase, scenario: str, dam_g: DispatchFn, nodes,
                     residual: Optional[ResidualFn]) -> Dict[str, Quantity]:
    """Per-node injection before this market acts (DAM schedule plus realized data)."""
    inj: Dict[str, Quantity] = {n: 0.0 for n in case.network.node_ids if n in nodes}
    for u in case.units:
        if u.node in inj:
            inj[u.node] = inj[u.node] + dam_g(u.id)
    for r in case.renewables:
        if r.node in inj:
            inj[r.node] = inj[r.node] + r.realized[scenario]
    for d in case.loads:
        if d.node in inj:
            inj[d.node] = inj[d.node] - d.realized[scenario]
    if residual is not None:
        for u in case.units:
            if u.node in inj and case.in_distribution(u):
                inj[u.node] = inj[u.node] + residual("up", u.id) - residual("down", u.id)
        for d in case.flexible_loads:
            if d.node in inj and case.in_distribution(d):
                inj[d.node] = inj[d.node] + residual("curtail", d.id)
        for r in case.renewables:
            if r.node in inj and case.in_distribution(r):
                inj[r.node] = inj[r.node] - residual("spill", r.id)
    return inj
