"""
Bundled test system: a 12-node transmission network feeding three identical
14-node radial distribution feeders.

Generator, ladder, flexible-load and imbalance data are transcribed from the
published case; electrical data (reactances, flow limits), inflexible loads,
the split of distribution renewables and the allocation of each imbalance
over the loads are calibrated and flagged as such in ``provenance``.
"""

import logging
from typing import Dict, List, Tuple

import numpy as np

from tsodsoGame.items import (
    TRANSMISSION,
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

logger = logging.getLogger(__name__)

SLACK = "1"
N_FEEDERS = 3
FEEDER_SIZE = 14

#  id     node  capacity  C     C_up   C_down
UNITS = [
    ("U1", "10", 500.0, 88.0, 132.0, 44.0),
    ("U2", "11", 200.0, 72.0, 108.0, 36.0),
    ("U3", "12", 300.0, 91.0, 136.5, 45.5),
    ("U4", "9",  500.0, 71.0, 106.5, 35.5),
    ("U5", "13", 10.0,  85.0, 127.5, 42.5),
    ("U6", "14", 5.0,   80.0, 120.0, 40.0),
    ("U7", "27", 5.0,   75.0, 112.5, 37.5),
    ("U8", "28", 15.0,  86.0, 129.0, 43.0),
    ("U9", "41", 20.0,  82.0, 123.0, 41.0),
    ("U10", "42", 5.0,  73.0, 109.5, 36.5),
]

# DAM, up and down ladders as published (U9 and U10 DAM ladders included)
UNIT_LADDERS = {
    "U1":  ((96.80, 105.60, 114.40), (145.20, 171.60, 198.00), (39.60, 30.80, 22.00)),
    "U2":  ((79.20, 86.40, 93.60),   (118.80, 140.40, 162.00), (32.40, 25.20, 18.00)),
    "U3":  ((100.10, 109.20, 118.30), (150.15, 177.45, 204.75), (40.95, 31.85, 22.75)),
    "U4":  ((78.10, 85.20, 92.30),   (117.15, 138.45, 159.75), (31.95, 24.85, 17.75)),
    "U5":  ((93.50, 102.00, 110.50), (140.25, 165.75, 191.25), (38.25, 29.75, 21.25)),
    "U6":  ((88.00, 96.00, 104.00),  (132.00, 156.00, 180.00), (36.00, 28.00, 20.00)),
    "U7":  ((82.50, 90.00, 97.50),   (123.75, 146.25, 168.75), (33.75, 26.25, 18.75)),
    "U8":  ((94.60, 103.20, 111.80), (141.90, 167.70, 193.50), (38.70, 30.10, 21.50)),
    "U9":  ((90.20, 82.00, 106.60),  (135.30, 159.90, 184.50), (36.90, 28.70, 20.50)),
    "U10": ((80.30, 73.00, 94.90),   (120.45, 142.35, 164.25), (32.85, 25.55, 18.25)),
}

#  id     node  forecast  curtailment ladder
FLEXIBLE_LOADS = [
    ("N2",  "2",  192.2, (95.00, 142.50, 228.00)),
    ("N3",  "3",  219.2, (98.79, 148.18, 237.09)),
    ("N4",  "4",  219.9, (93.53, 140.30, 224.48)),
    ("N5",  "5",  69.5,  (95.74, 143.61, 229.77)),
    ("N6",  "6",  293.4, (94.22, 141.34, 226.14)),
    ("N13", "13", 12.86, (97.47, 146.21, 233.94)),
    ("N14", "14", 12.98, (99.00, 148.50, 237.60)),
    ("N15", "15", 3.35,  (96.35, 144.53, 231.25)),
    ("N27", "27", 12.86, (92.60, 138.90, 222.24)),
    ("N28", "28", 12.98, (94.05, 141.08, 225.72)),
    ("N29", "29", 3.35,  (91.54, 137.31, 219.69)),
    ("N41", "41", 12.86, (97.57, 146.36, 234.18)),
    ("N42", "42", 12.98, (99.10, 148.65, 237.84)),
    ("N43", "43", 3.35,  (100.01, 150.02, 240.02)),
]

OWNERS = {
    "U1": "1", "U2": "1", "N4": "1",
    "U3": "2", "U4": "2", "N6": "2",
    "N2": "3", "N3": "3", "N5": "3",
    # per feeder: one generator and two loads, then one generator and the major load
    "U6": "4", "N13": "4", "N15": "4", "U5": "5", "N14": "5",
    "U8": "6", "N27": "6", "N29": "6", "U7": "7", "N28": "7",
    "U10": "8", "N41": "8", "N43": "8", "U9": "9", "N42": "9",
}

# system imbalance per scenario and its allocation by subsystem
IMBALANCE = {
    TRANSMISSION: (99.0, 66.0, 33.0, 0.0, -33.0, -66.0, -99.0),
    "D1": (9.0, 6.0, 3.0, 0.0, -3.0, -6.0, -9.0),
    "D2": (6.0, 4.0, 2.0, 0.0, -2.0, -4.0, -6.0),
    "D3": (15.0, 10.0, 5.0, 0.0, -5.0, -10.0, -15.0),
}

# the DAM bids that reproduce the published day-ahead outcome (lambda = 96.80)
REFERENCE_DAM_BIDS = {
    "U1": 96.80, "U2": 93.60, "U3": 100.10, "U4": 92.30, "U5": 93.50,
    "U6": 88.00, "U7": 82.50, "U8": 94.60, "U9": 90.20, "U10": 80.30,
}

T_LINES = [
    ("9", "1"), ("10", "2"), ("11", "5"), ("1", "2"), ("2", "3"), ("3", "4"), ("4", "5"),
    ("1", "7"), ("5", "8"), ("7", "8"), ("1", "6"), ("4", "6"), ("12", "6"),
]
CONGESTED = {("1", "6"), ("4", "6")}
# feeder branches with local numbering 0..13 (node 0 is the feeder head)
FEEDER_LINES = [
    (0, 1), (1, 2), (2, 3), (2, 4), (5, 3), (5, 8), (7, 4), (6, 4), (7, 9), (9, 12), (9, 11), (10, 8), (10, 13),
]
FEEDER_HEADS = {"D1": "4", "D2": "5", "D3": "6"}
FEEDER_RENEWABLES = {"D1": (5.0, 3.0, 3.0, 3.0, 3.0, 3.0),
                     "D2": (4.0, 3.0, 3.0, 3.0, 3.0, 3.0),
                     "D3": (6.0, 5.0, 5.0, 5.0, 5.0, 5.0)}
FEEDER_RENEWABLE_NODES = (2, 3, 5, 4, 7, 9)
FEEDER_INFLEXIBLE = ((5, 5.0), (6, 5.0), (8, 4.0), (10, 4.0), (11, 4.0), (12, 4.0), (13, 4.0))
T_RENEWABLES = [("R1", "1", 65.0), ("R2", "7", 85.0), ("R3", "8", 95.0)]
T_INFLEXIBLE = [("N9", "9", 62.23), ("N7", "7", 50.0), ("N8", "8", 50.0)]

CONGESTION_FACTOR = 0.85
HEADROOM_FACTOR = 1.5
HEADROOM_MW = 50.0


def corrected_ladder(unit: Tuple, role: LadderRole) -> Tuple[float, ...]:
    """Ladder rebuilt from the costs by the stated mark-up rules."""
    _, _, _, cost, up, down = unit
    if role == LadderRole.DAM:
        return tuple(round(cost * k, 2) for k in (1.1, 1.2, 1.3))
    if role == LadderRole.UP:
        return tuple(round(up * k, 2) for k in (1.1, 1.3, 1.5))
    return tuple(round(down * k, 2) for k in (0.9, 0.7, 0.5))


def _feeder_node(k: int, local: int) -> str:
    return str(13 + FEEDER_SIZE * (k - 1) + local)


def compute_ptdf(node_ids: List[str], branches: List[Tuple[str, str]], slack: str,
                 reactance: float = 1.0) -> np.ndarray:
    """DC shift factors of every branch (rows) to every node injection (columns)."""
    pos = {n: i for i, n in enumerate(node_ids)}
    A = np.zeros((len(branches), len(node_ids)))
    for b, (f, t) in enumerate(branches):
        A[b, pos[f]] = 1.0
        A[b, pos[t]] = -1.0
    y = np.full(len(branches), 1.0 / reactance)
    B = A.T @ np.diag(y) @ A
    keep = [i for i in range(len(node_ids)) if i != pos[slack]]
    B_inv = np.zeros_like(B)
    B_inv[np.ix_(keep, keep)] = np.linalg.inv(B[np.ix_(keep, keep)])
    return np.diag(y) @ A @ B_inv


def build_cigre_case(corrected_ladders: bool = False) -> MarketCase:
    nodes = [Node(id=str(n), subsystem=TRANSMISSION) for n in range(1, 13)]
    for k in range(1, N_FEEDERS + 1):
        nodes += [Node(id=_feeder_node(k, j), subsystem=f"D{k}") for j in range(FEEDER_SIZE)]
    node_ids = [n.id for n in nodes]

    monitored: List[Tuple[str, str, str]] = [(TRANSMISSION, f, t) for f, t in T_LINES]
    for k in range(1, N_FEEDERS + 1):
        monitored += [(f"D{k}", _feeder_node(k, a), _feeder_node(k, b)) for a, b in FEEDER_LINES]
    coupling = [(head, _feeder_node(int(d[1:]), 0)) for d, head in FEEDER_HEADS.items()]
    branches = [(f, t) for _, f, t in monitored] + coupling
    H = compute_ptdf(node_ids, branches, SLACK)[: len(monitored)]

    units = tuple(ProgrammableUnit(id=u, node=n, owner=OWNERS[u], capacity=g, cost=c, up_cost=cu, down_cost=cd)
                  for u, n, g, c, cu, cd in UNITS)

    renewables = [RenewableUnit(id=r, node=n, forecast=w, realized={}) for r, n, w in T_RENEWABLES]
    rid = len(T_RENEWABLES)
    for k in range(1, N_FEEDERS + 1):
        for local, w in zip(FEEDER_RENEWABLE_NODES, FEEDER_RENEWABLES[f"D{k}"]):
            rid += 1
            renewables.append(RenewableUnit(id=f"R{rid}", node=_feeder_node(k, local), forecast=w, realized={}))

    load_rows = [(lid, n, d, 0.2, OWNERS[lid]) for lid, n, d, _ in FLEXIBLE_LOADS]
    load_rows += [(lid, n, d, 0.0, None) for lid, n, d in T_INFLEXIBLE]
    for k in range(1, N_FEEDERS + 1):
        for local, d in FEEDER_INFLEXIBLE:
            node = _feeder_node(k, local)
            load_rows.append((f"N{node}", node, d, 0.0, None))

    scenario_ids = [f"s{j}" for j in range(1, 8)]
    subsystem = {n.id: n.subsystem for n in nodes}
    totals: Dict[str, float] = {}
    for _, n, d, _, _ in load_rows:
        totals[subsystem[n]] = totals.get(subsystem[n], 0.0) + d
    loads = []
    for lid, n, d, delta, owner in load_rows:
        share = d / totals[subsystem[n]]
        realized = {s: d + share * IMBALANCE[subsystem[n]][j] for j, s in enumerate(scenario_ids)}
        loads.append(LoadPoint(id=lid, node=n, forecast=d, realized=realized, delta=delta, owner=owner))
    renewables = [r.model_copy(update={"realized": {s: r.forecast for s in scenario_ids}}) for r in renewables]

    ladders = []
    for u in UNITS:
        dam, up, down = UNIT_LADDERS[u[0]]
        if corrected_ladders:
            dam, up, down = (corrected_ladder(u, role) for role in (LadderRole.DAM, LadderRole.UP, LadderRole.DOWN))
        ladders += [BidLadder(resource=u[0], role=LadderRole.DAM, prices=dam),
                    BidLadder(resource=u[0], role=LadderRole.UP, prices=up),
                    BidLadder(resource=u[0], role=LadderRole.DOWN, prices=down)]
    ladders += [BidLadder(resource=lid, role=LadderRole.CURTAIL, prices=p) for lid, _, _, p in FLEXIBLE_LOADS]

    # base flows of the reference DAM schedule orient and size every monitored line
    injection = np.zeros(len(node_ids))
    pos = {n: i for i, n in enumerate(node_ids)}
    for r in renewables:
        injection[pos[r.node]] += r.forecast
    for d in loads:
        injection[pos[d.node]] -= d.forecast
    demand = sum(d.forecast for d in loads) - sum(r.forecast for r in renewables)
    unit_node = {u.id: u.node for u in units}
    for uid, g in _reference_dispatch(units, demand).items():
        injection[pos[unit_node[uid]]] += g
    base = H @ injection

    lines, rows = [], []
    for i, (sub, f, t) in enumerate(monitored):
        h = H[i]
        if base[i] < 0.0:
            f, t, h = t, f, -h
        flow = abs(float(base[i]))
        if (f, t) in CONGESTED or (t, f) in CONGESTED:
            limit = round(CONGESTION_FACTOR * flow, 2)
        else:
            limit = round(HEADROOM_FACTOR * flow + HEADROOM_MW, 2)
        lines.append(Line(id=f"{f}-{t}", subsystem=sub, from_node=f, to_node=t, limit=limit))
        rows.append(tuple(float(round(v, 12)) + 0.0 for v in h))

    network = Network(nodes=tuple(nodes), lines=tuple(lines), ptdf=tuple(rows))
    probability = 1.0 / len(scenario_ids)
    provenance = {
        "units": "published",
        "ladders": "calibrated" if corrected_ladders else "published",
        "loads.flexible": "published",
        "loads.inflexible": "calibrated",
        "renewables.transmission": "published",
        "renewables.distribution": "calibrated",
        "scenarios.imbalance": "published",
        "scenarios.allocation": "calibrated",
        "scenarios.probability": "calibrated",
        "network": "calibrated",
        "aggregators": "published",
    }
    case = MarketCase(
        name="cigre-ttd" + ("-corrected" if corrected_ladders else ""),
        network=network,
        units=units,
        renewables=tuple(renewables),
        loads=tuple(loads),
        ladders=tuple(ladders),
        scenarios=ScenarioSet(scenarios=tuple(Scenario(id=s, probability=probability) for s in scenario_ids)),
        aggregators=tuple(str(i) for i in range(1, 10)),
        provenance=provenance,
    )
    logger.debug(f"built {case.name}: {len(nodes)} nodes, {len(lines)} monitored lines")
    return case


def _reference_dispatch(units, demand: float) -> Dict[str, float]:
    """Merit-order dispatch under ``REFERENCE_DAM_BIDS``."""
    out = {u.id: 0.0 for u in units}
    for u in sorted(units, key=lambda u: REFERENCE_DAM_BIDS[u.id]):
        out[u.id] = min(u.capacity, max(0.0, demand))
        demand -= out[u.id]
    return out
