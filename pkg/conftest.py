"""Shared fixtures: small hand-checkable market cases and the bundled case."""

from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
import pytest

from tsodsoGame.cigre import build_cigre_case, compute_ptdf
from tsodsoGame.items import (
    BidLadder,
    LadderRole,
    Line,
    LoadPoint,
    MarketCase,
    Network,
    Node,
    ProgrammableUnit,
    RenewableUnit,
    Scenario,
    ScenarioSet,
)


def build_case(units: Sequence[dict], loads: Sequence[dict] = (), renewables: Sequence[dict] = (),
               scenarios: Optional[Dict[str, float]] = None, nodes: Optional[Dict[str, str]] = None,
               lines: Iterable[Tuple[str, str, str, float]] = (), coupling: Iterable[Tuple[str, str]] = (),
               aggregators: Optional[Sequence[str]] = None, name: str = "toy") -> MarketCase:
    """Assemble a case from plain dicts.

    ``lines`` are monitored (subsystem, from, to, limit); ``coupling`` branches
    only enter the shift factors. Scalar ``realized`` values apply to every
    scenario.
    """
    scenarios = scenarios or {"s1": 1.0}
    nodes = nodes or {"1": "T"}
    node_ids = list(nodes)
    lines = list(lines)

    def realized(row):
        value = row.get("realized", row["forecast"])
        return dict(value) if isinstance(value, dict) else {s: float(value) for s in scenarios}

    ptdf = ()
    if lines:
        branches = [(f, t) for _, f, t, _ in lines] + list(coupling)
        H = compute_ptdf(node_ids, branches, node_ids[0])[: len(lines)]
        ptdf = tuple(tuple(float(v) for v in row) for row in H)
    network = Network(
        nodes=tuple(Node(id=n, subsystem=s) for n, s in nodes.items()),
        lines=tuple(Line(id=f"{f}-{t}", subsystem=sub, from_node=f, to_node=t, limit=lim)
                    for sub, f, t, lim in lines),
        ptdf=ptdf,
    )

    ladders = []
    owners = []
    unit_rows = []
    for u in units:
        cost = u["cost"]
        unit_rows.append(ProgrammableUnit(id=u["id"], node=u.get("node", node_ids[0]), owner=u["owner"],
                                          capacity=u["capacity"], cost=cost,
                                          up_cost=u.get("up_cost", 1.5 * cost),
                                          down_cost=u.get("down_cost", 0.5 * cost)))
        ladders += [BidLadder(resource=u["id"], role=LadderRole.DAM, prices=tuple(u["dam"])),
                    BidLadder(resource=u["id"], role=LadderRole.UP, prices=tuple(u["up"])),
                    BidLadder(resource=u["id"], role=LadderRole.DOWN, prices=tuple(u["down"]))]
        owners.append(u["owner"])
    load_rows = []
    for d in loads:
        load_rows.append(LoadPoint(id=d["id"], node=d.get("node", node_ids[0]), forecast=d["forecast"],
                                   realized=realized(d), delta=d.get("delta", 0.0), owner=d.get("owner")))
        if d.get("delta", 0.0) > 0.0:
            ladders.append(BidLadder(resource=d["id"], role=LadderRole.CURTAIL, prices=tuple(d["curtail"])))
            owners.append(d["owner"])
    res_rows = [RenewableUnit(id=r["id"], node=r.get("node", node_ids[0]), forecast=r["forecast"],
                              realized=realized(r)) for r in renewables]

    roster = list(aggregators) if aggregators is not None else list(dict.fromkeys(owners))
    return MarketCase(
        name=name,
        network=network,
        units=tuple(unit_rows),
        renewables=tuple(res_rows),
        loads=tuple(load_rows),
        ladders=tuple(ladders),
        scenarios=ScenarioSet(scenarios=tuple(Scenario(id=s, probability=p) for s, p in scenarios.items())),
        aggregators=tuple(roster),
    )


def monopoly_case(dam=(80.0,), up=(120.0,), down=(30.0,), forecast=60.0, realized=64.0,
                  capacity=100.0) -> MarketCase:
    """One unit serving one inflexible load on a single node."""
    return build_case(
        units=[dict(id="U1", owner="1", capacity=capacity, cost=70.0, up_cost=105.0, down_cost=35.0,
                    dam=dam, up=up, down=down)],
        loads=[dict(id="L1", forecast=forecast, realized=realized)],
        name="monopoly",
    )


def two_layer_case() -> MarketCase:
    """A transmission pair of nodes feeding one distribution system.

    Aggregator 1 owns the transmission unit with one candidate per ladder;
    aggregator 2 owns the distribution unit and a curtailable load.
    """
    return build_case(
        nodes={"1": "T", "2": "T", "3": "D1", "4": "D1"},
        units=[
            dict(id="UT", node="1", owner="1", capacity=100.0, cost=50.0, up_cost=75.0, down_cost=25.0,
                 dam=(55.0,), up=(100.0,), down=(20.0,)),
            dict(id="UD", node="3", owner="2", capacity=30.0, cost=60.0, up_cost=80.0, down_cost=30.0,
                 dam=(58.0, 72.0), up=(90.0, 110.0), down=(25.0, 15.0)),
        ],
        loads=[
            dict(id="LT", node="2", forecast=60.0, realized=65.0),
            dict(id="LD", node="4", forecast=20.0, realized=23.0, delta=0.2, owner="2", curtail=(95.0, 130.0)),
        ],
        renewables=[dict(id="RD", node="4", forecast=5.0)],
        name="two-layer",
    )


def dam_game_case() -> MarketCase:
    """Two price-setting units, two DAM candidates each, no imbalance.

    Pure Nash profile: unit A bids 50, unit B bids 62.
    """
    return build_case(
        units=[
            dict(id="UA", owner="1", capacity=50.0, cost=40.0, up_cost=60.0, down_cost=20.0,
                 dam=(50.0, 60.0), up=(90.0,), down=(20.0,)),
            dict(id="UB", owner="2", capacity=50.0, cost=40.0, up_cost=60.0, down_cost=20.0,
                 dam=(52.0, 62.0), up=(92.0,), down=(18.0,)),
        ],
        loads=[dict(id="L1", forecast=60.0)],
        name="dam-game",
    )


def corridor_case(limit: float = 62.0) -> MarketCase:
    """Two transmission nodes joined by one monitored line; load at the far end."""
    return build_case(
        nodes={"1": "T", "2": "T"},
        lines=[("T", "1", "2", limit)],
        units=[
            dict(id="U1", node="1", owner="1", capacity=100.0, cost=45.0,
                 dam=(50.0,), up=(100.0,), down=(20.0,)),
            dict(id="U2", node="2", owner="2", capacity=20.0, cost=85.0,
                 dam=(90.0,), up=(130.0,), down=(40.0,)),
        ],
        loads=[dict(id="L2", node="2", forecast=60.0, realized=65.0, delta=0.2, owner="2",
                    curtail=(120.0,))],
        name="corridor",
    )


@pytest.fixture
def make_case():
    return build_case


@pytest.fixture
def make_monopoly():
    return monopoly_case


@pytest.fixture
def monopoly():
    return monopoly_case()


@pytest.fixture
def two_layer():
    return two_layer_case()


@pytest.fixture
def dam_game():
    return dam_game_case()


@pytest.fixture
def corridor():
    return corridor_case()


@pytest.fixture(scope="session")
def cigre():
    return build_cigre_case()


def random_two_layer_case(rng, n_scenarios: int = 2) -> MarketCase:
    """Two-layer layout with drawn prices and sizes, feasible under every scheme and profile.

    UT always undercuts UD in the DAM and covers the whole net load, so UT
    sets the price and UD keeps its full capacity for regulation. Both
    subsystems end up short in every scenario (loads above forecast, the
    renewable below it).
    """
    scenarios = {f"s{k + 1}": 1.0 / n_scenarios for k in range(n_scenarios)}

    def draw(low, high, size=None):
        return rng.uniform(low, high, size)

    def ladder(low, high):
        return tuple(float(v) for v in np.sort(draw(low, high, 2)))

    ut_cost, ud_cost = draw(40.0, 45.0), draw(60.0, 65.0)
    lt, ld, rd = draw(40.0, 70.0), draw(10.0, 25.0), draw(2.0, 8.0)
    return build_case(
        nodes={"1": "T", "2": "T", "3": "D1", "4": "D1"},
        lines=[("T", "1", "2", 500.0), ("D1", "3", "4", 500.0)],
        coupling=[("2", "3")],
        units=[
            dict(id="UT", node="1", owner="1", capacity=draw(150.0, 200.0), cost=ut_cost,
                 up_cost=1.5 * ut_cost, down_cost=0.5 * ut_cost,
                 dam=ladder(46.0, 58.0), up=ladder(70.0, 140.0), down=ladder(5.0, 30.0)),
            dict(id="UD", node="3", owner="2", capacity=draw(30.0, 60.0), cost=ud_cost,
                 up_cost=1.5 * ud_cost, down_cost=0.5 * ud_cost,
                 dam=ladder(60.0, 80.0), up=ladder(70.0, 140.0), down=ladder(5.0, 30.0)),
        ],
        loads=[
            dict(id="LT", node="2", forecast=lt, realized={s: lt + draw(1.0, 6.0) for s in scenarios}),
            dict(id="LD", node="4", forecast=ld, realized={s: ld + draw(1.0, 4.0) for s in scenarios},
                 delta=0.2, owner="2", curtail=ladder(80.0, 140.0)),
        ],
        renewables=[dict(id="RD", node="4", forecast=rd, realized={s: rd * draw(0.7, 1.0) for s in scenarios})],
        scenarios=scenarios,
        name="random-two-layer",
    )


def random_dam_case(rng) -> MarketCase:
    """Three units with distinct drawn bids; the load always leaves one unit marginal."""
    caps = rng.uniform(20.0, 60.0, 3)
    bids = rng.uniform(40.0, 90.0, (3, 2))
    units = []
    for k, owner in enumerate(("1", "1", "2")):
        cost = float(bids[k].min()) - rng.uniform(1.0, 10.0)
        prices = tuple(float(v) for v in np.sort(bids[k])) if owner == "1" else (float(bids[k, 0]),)
        units.append(dict(id=f"G{k}", owner=owner, capacity=float(caps[k]), cost=cost,
                          dam=prices, up=(2.0 * cost,), down=(0.5 * cost,)))
    load = float(rng.uniform(0.1, 0.9) * caps.sum())
    return build_case(units=units, loads=[dict(id="L1", forecast=load)], name="random-dam")


@pytest.fixture
def make_random_case():
    return random_two_layer_case


@pytest.fixture
def make_random_dam():
    return random_dam_case
