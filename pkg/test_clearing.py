import numpy as np
import pytest

from conftest import corridor_case, random_two_layer_case
from tsodsoGame.cigre import REFERENCE_DAM_BIDS
from tsodsoGame.clearing import (
    aggregator_profit,
    boundary_exchange,
    clear_asm_common,
    clear_asm_distribution,
    clear_asm_transmission_B,
    clear_asm_transmission_C,
    clear_dam,
    clear_scenario,
    clear_scheme,
    cost_ratios,
    expected_cost,
    post_market_injections,
    system_cost,
)
from tsodsoGame.exceptions import ClearingError, InfeasibleMarketError, UnsupportedSchemeError
from tsodsoGame.items import (
    FAMILY_ROLE,
    AsmResult,
    CascadeResult,
    DamResult,
    ScenarioOutcome,
    Scheme,
    StrategyProfile,
    slot_key,
)
from tsodsoGame.network import forecast_injections

TABLE_ROWS = {
    "A": [23137.87, 16934.08, 10822.99, 5003.63, -445.83, -3371.33, -5057.00],
    "B": [21227.42, 15752.79, 10357.93, 5014.85, 724.10, -3338.82, -5008.23],
    "C": [26136.85, 18952.68, 11836.83, 5003.63, 1057.53, -2888.56, -5054.42],
}
UNIFORM = {f"s{k}": 1 / 7 for k in range(1, 8)}


def profile_at(case, scheme, **picks) -> StrategyProfile:
    """First candidate everywhere except ``picks`` (family__resource=index)."""
    choices = {slot_key(f, r): 0 for f, r in case.bidding_slots(scheme)}
    for key, idx in picks.items():
        family, resource = key.split("__")
        choices[slot_key(family, resource)] = idx
    return StrategyProfile(choices=choices)


# ---------------------------------------------------------------------------
# DAM
# ---------------------------------------------------------------------------
def test_single_unit_sets_price(make_monopoly):
    case = make_monopoly(dam=(50.0,))
    dam = clear_dam(case, {"U1": 50.0})
    assert dam.dispatch["U1"] == pytest.approx(60.0)
    assert dam.price == pytest.approx(50.0)
    assert dam.capacity_duals["U1"] == 0.0


def test_merit_order_and_capacity_duals(make_case):
    case = make_case(
        units=[dict(id="U1", owner="1", capacity=10.0, cost=1.0, dam=(1.0,), up=(3.0,), down=(0.5,)),
               dict(id="U2", owner="1", capacity=10.0, cost=1.0, dam=(2.0,), up=(3.0,), down=(0.5,))],
        loads=[dict(id="L1", forecast=15.0)],
    )
    dam = clear_dam(case, {"U1": 1.0, "U2": 2.0})
    assert dam.dispatch == pytest.approx({"U1": 10.0, "U2": 5.0})
    assert dam.price == pytest.approx(2.0)
    assert dam.capacity_duals == pytest.approx({"U1": 1.0, "U2": 0.0})


def test_insufficient_capacity(make_monopoly):
    case = make_monopoly(capacity=50.0)
    with pytest.raises(InfeasibleMarketError):
        clear_dam(case, {"U1": 80.0})


def test_missing_bid(monopoly):
    with pytest.raises(ClearingError, match="U1"):
        clear_dam(monopoly, {})


def test_bundled_reference_bids(cigre):
    dam = clear_dam(cigre, REFERENCE_DAM_BIDS)
    assert dam.price == pytest.approx(96.80, abs=1e-9)
    expected = {"U4": 500, "U2": 200, "U5": 10, "U6": 5, "U7": 5, "U8": 15, "U9": 20, "U10": 5,
                "U1": 259, "U3": 0}
    for uid, g in expected.items():
        assert dam.dispatch[uid] == pytest.approx(g, abs=1e-6), uid


# ---------------------------------------------------------------------------
# Services markets
# ---------------------------------------------------------------------------
def test_no_imbalance_no_regulation(make_monopoly):
    case = make_monopoly(realized=60.0)
    profile = profile_at(case, Scheme.A)
    res = clear_asm_common(case, clear_dam(case, profile), profile, "s1")
    assert res.objective == pytest.approx(0.0)
    assert res.up["U1"] == pytest.approx(0.0) and res.down["U1"] == pytest.approx(0.0)


def test_single_unit_covers_imbalance(make_monopoly):
    case = make_monopoly(up=(150.0,), forecast=90.0, realized=94.0)
    profile = profile_at(case, Scheme.A)
    res = clear_asm_common(case, clear_dam(case, profile), profile, "s1")
    assert res.up["U1"] == pytest.approx(4.0)
    assert res.objective == pytest.approx(600.0)
    assert res.balance_dual == pytest.approx(150.0)


def test_binding_line_forces_downstream_resource(corridor):
    # flow 65 on a 62 MW line: 3 MW must come from node 2, curtailment beats U2
    profile = profile_at(corridor, Scheme.A)
    dam = clear_dam(corridor, profile)
    assert dam.dispatch["U1"] == pytest.approx(60.0)
    res = clear_asm_common(corridor, dam, profile, "s1")
    assert res.up["U1"] == pytest.approx(2.0)
    assert res.curtail["L2"] == pytest.approx(3.0)
    assert res.up["U2"] == pytest.approx(0.0)
    assert res.objective == pytest.approx(560.0)
    assert res.flows["1-2"] == pytest.approx(62.0)
    assert res.flow_duals["1-2"] == pytest.approx(20.0)
    assert res.balance_dual == pytest.approx(100.0)


def test_infeasible_corridor():
    # 45 MW must move to node 2 but only 33 MW can
    case = corridor_case(limit=20.0)
    profile = profile_at(case, Scheme.A)
    with pytest.raises(InfeasibleMarketError):
        clear_asm_common(case, clear_dam(case, profile), profile, "s1")


@pytest.mark.parametrize("up_index, resource, cost", [(0, "UD", 270.0), (1, "LD", 285.0)])
def test_distribution_market_takes_cheapest_local_resource(two_layer, up_index, resource, cost):
    profile = profile_at(two_layer, Scheme.B, up__UD=up_index)
    res = clear_asm_distribution(two_layer, clear_dam(two_layer, profile), profile, "s1", "D1")
    moved = res.up.get(resource, 0.0) + res.curtail.get(resource, 0.0)
    assert moved == pytest.approx(3.0)
    assert res.objective == pytest.approx(cost)
    assert set(res.up) == {"UD"}


def test_scheme_a_has_no_distribution_markets(two_layer):
    profile = profile_at(two_layer, Scheme.A)
    with pytest.raises(ClearingError):
        clear_asm_distribution(two_layer, clear_dam(two_layer, profile), profile, "s1", "D1", Scheme.A)


def test_transmission_market_b_uses_transmission_resources(two_layer):
    profile = profile_at(two_layer, Scheme.B)
    res = clear_asm_transmission_B(two_layer, clear_dam(two_layer, profile), profile, "s1")
    assert set(res.up) == {"UT"}
    assert res.up["UT"] == pytest.approx(5.0)
    assert res.objective == pytest.approx(500.0)


def test_scheme_b_keeps_boundary_exchange(two_layer):
    profile = profile_at(two_layer, Scheme.B, curtail__LD=1)
    dam = clear_dam(two_layer, profile)
    before = boundary_exchange(two_layer, "D1", forecast_injections(two_layer, dam))
    outcome = clear_scenario(two_layer, Scheme.B, dam, profile, "s1")
    after = boundary_exchange(two_layer, "D1", post_market_injections(two_layer, dam, "s1", list(outcome.markets)))
    assert after == pytest.approx(before, abs=1e-9)


@pytest.mark.parametrize("seed", range(50))
def test_scheme_b_keeps_boundary_exchange_on_random_cases(seed):
    rng = np.random.default_rng(seed)
    case = random_two_layer_case(rng)
    choices = {slot_key(f, r): int(rng.integers(len(case.ladder(r, FAMILY_ROLE[f]).prices)))
               for f, r in case.bidding_slots(Scheme.B)}
    profile = StrategyProfile(choices=choices)
    result = clear_scheme(case, Scheme.B, profile)
    before = boundary_exchange(case, "D1", forecast_injections(case, result.dam))
    for outcome in result.outcomes:
        injections = post_market_injections(case, result.dam, outcome.scenario, list(outcome.markets))
        assert boundary_exchange(case, "D1", injections) == pytest.approx(before, abs=1e-7)


def test_scheme_c_residual_bound_collapses(two_layer):
    profile = profile_at(two_layer, Scheme.C, curtail_t__LD=1)
    dam = clear_dam(two_layer, profile)
    local = AsmResult(market="D1", scenario="s1", up={"UD": 30.0})
    res = clear_asm_transmission_C(two_layer, dam, [local], profile, "s1")
    assert res.up["UD"] == pytest.approx(0.0)
    assert res.up["UT"] == pytest.approx(5.0)
    with pytest.raises(ClearingError):
        clear_asm_transmission_C(two_layer, dam, [], profile, "s1")


def test_scheme_c_layers(two_layer):
    profile = profile_at(two_layer, Scheme.C)
    outcome = clear_scenario(two_layer, Scheme.C, clear_dam(two_layer, profile), profile, "s1")
    assert [(m.market, m.layer) for m in outcome.markets] == [("T", "T"), ("D1", "D")]
    # D1 settles its own 3 MW, the transmission layer the remaining 5 MW
    assert outcome.markets[1].up["UD"] == pytest.approx(3.0)
    total = sum(sum(m.up.values()) + sum(m.curtail.values()) - sum(m.down.values()) - sum(m.spill.values())
                for m in outcome.markets)
    assert total == pytest.approx(8.0)


# ---------------------------------------------------------------------------
# Costs and profits
# ---------------------------------------------------------------------------
@pytest.mark.parametrize("scheme, expected", [("A", 6717.77), ("B", 6390.01), ("C", 7863.51)])
def test_expected_cost_of_published_rows(scheme, expected):
    costs = dict(zip(UNIFORM, TABLE_ROWS[scheme]))
    assert expected_cost(costs, UNIFORM).expected == pytest.approx(expected, abs=0.01)


def test_cost_ratios():
    expected = {k: expected_cost(dict(zip(UNIFORM, v)), UNIFORM).expected for k, v in TABLE_ROWS.items()}
    ratios = cost_ratios(expected, "B")
    assert ratios["A"] == pytest.approx(1.0513, abs=5e-4)
    assert ratios["C"] == pytest.approx(1.2306, abs=5e-4)
    assert "B" not in ratios


def test_system_cost_zero_and_single_term(make_monopoly):
    idle = ScenarioOutcome(scenario="s1", markets=(AsmResult(market="A", scenario="s1"),))
    assert system_cost(Scheme.A, [idle], {"s1": 1.0}).expected == 0.0

    case = make_monopoly(up=(145.20,), realized=70.0)
    result = clear_scheme(case, Scheme.A, profile_at(case, Scheme.A))
    assert system_cost(Scheme.A, result.outcomes, {"s1": 1.0}).expected == pytest.approx(1452.0)


def test_system_cost_checks_shape():
    two = ScenarioOutcome(scenario="s1", markets=(AsmResult(market="A", scenario="s1"),
                                                  AsmResult(market="A", scenario="s1")))
    with pytest.raises(ClearingError):
        system_cost(Scheme.A, [two], {"s1": 1.0})
    with pytest.raises(ClearingError):
        system_cost(Scheme.B, [], {"s1": 1.0})


def test_profit_of_dispatched_unit(make_case):
    case = make_case(units=[dict(id="U1", owner="1", capacity=500.0, cost=88.0,
                                 dam=(96.8,), up=(145.2,), down=(39.6,))],
                     loads=[dict(id="L1", forecast=259.0)])
    dam = DamResult(dispatch={"U1": 259.0}, price=96.80, capacity_duals={"U1": 0.0}, objective=0.0)
    result = CascadeResult(scheme=Scheme.A, dam=dam, outcomes=())
    assert aggregator_profit(case, Scheme.A, "1", result, StrategyProfile()) == pytest.approx(2279.20)
    assert aggregator_profit(case, Scheme.A, "nobody", result, StrategyProfile()) == 0.0


def test_profit_of_curtailment_only_aggregator(make_case):
    case = make_case(units=[dict(id="U1", owner="1", capacity=500.0, cost=88.0,
                                 dam=(96.8,), up=(145.2,), down=(39.6,))],
                     loads=[dict(id="N2", forecast=192.2, delta=0.2, owner="3", curtail=(95.0, 142.5, 228.0))])
    dam = DamResult(dispatch={"U1": 192.2}, price=96.80, capacity_duals={"U1": 0.0}, objective=0.0)
    outcome = ScenarioOutcome(scenario="s1", markets=(AsmResult(market="A", scenario="s1", curtail={"N2": 10.0}),))
    result = CascadeResult(scheme=Scheme.A, dam=dam, outcomes=(outcome,))
    profile = StrategyProfile(choices={"curtail/N2": 1})
    assert aggregator_profit(case, Scheme.A, "3", result, profile) == pytest.approx(457.0)


def test_unsupported_scheme_tag():
    with pytest.raises(UnsupportedSchemeError):
        Scheme.parse("D")
    assert Scheme.parse("c") is Scheme.C
