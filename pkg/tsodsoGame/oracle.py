"""
Brute-force strategy enumeration over direct market clearing.

Used to certify MPEC best responses and equilibria on small cases. Nothing
here touches the MPEC builder.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from tsodsoGame import settings
from tsodsoGame.clearing import aggregator_profit, all_profits, clear_dam, clear_scenario
from tsodsoGame.exceptions import ClearingError, StrategySpaceTooLarge
from tsodsoGame.items import (
    FAMILY_ROLE,
    CascadeResult,
    DamResult,
    MarketCase,
    Scheme,
    StrategyProfile,
    slot_key,
)

logger = logging.getLogger(__name__)


class StrategySpace:
    """Cartesian product of one aggregator's ladders under a scheme."""

    def __init__(self, case: MarketCase, scheme: Scheme, aggregator: str):
        self.aggregator = aggregator
        slots = case.bidding_slots(scheme, aggregator)
        self.slots = [slot_key(f, r) for f, r in slots]
        self.sizes = [len(case.ladder(r, FAMILY_ROLE[f]).prices) for f, r in slots]

    @property
    def count(self) -> int:
        return math.prod(self.sizes)

    def __len__(self) -> int:
        return self.count

    def __iter__(self) -> Iterator[Dict[str, int]]:
        # lexicographic order of the candidate-index tuple
        for combo in itertools.product(*(range(n) for n in self.sizes)):
            yield dict(zip(self.slots, combo))


@dataclass
class OracleResult:
    choices: Dict[str, int]
    profit: float
    evaluated: int


class _Cascade:
    """Clearing cascade with the DAM and services results cached."""

    def __init__(self, case: MarketCase, scheme: Scheme):
        self.case = case
        self.scheme = Scheme.parse(scheme)
        self._dam: Dict[Tuple, Optional[DamResult]] = {}
        self._asm: Dict[Tuple, Optional[CascadeResult]] = {}

    def run(self, profile: StrategyProfile) -> Optional[CascadeResult]:
        dam_key = tuple(profile.index("dam", u.id) for u in self.case.units)
        if dam_key not in self._dam:
            try:
                self._dam[dam_key] = clear_dam(self.case, profile)
            except ClearingError:
                self._dam[dam_key] = None
        dam = self._dam[dam_key]
        if dam is None:
            return None
        asm_key = (dam_key, tuple(v for k, v in profile.signature() if not k.startswith("dam/")))
        if asm_key not in self._asm:
            try:
                outcomes = tuple(clear_scenario(self.case, self.scheme, dam, profile, s)
                                 for s in self.case.scenario_ids())
                self._asm[asm_key] = CascadeResult(scheme=self.scheme, dam=dam, outcomes=outcomes)
            except ClearingError:
                self._asm[asm_key] = None
        return self._asm[asm_key]


def enumerate_best_response(case: MarketCase, scheme: Scheme, aggregator: str, rivals: StrategyProfile,
                            cap: int = settings.ORACLE_STRATEGY_CAP) -> OracleResult:
    """Best strategy of ``aggregator`` against fixed rival prices, by exhaustion.

    Strategies whose clearing is infeasible score -inf. Ties go to the
    lexicographically smallest candidate tuple.
    """
    scheme = Scheme.parse(scheme)
    space = StrategySpace(case, scheme, aggregator)
    if space.count > cap:
        raise StrategySpaceTooLarge(f"aggregator {aggregator}: {space.count} strategies exceed the cap of {cap}")
    cascade = _Cascade(case, scheme)
    best, best_profit, evaluated = None, -math.inf, 0
    for choices in space:
        profile = rivals.updated(choices)
        result = cascade.run(profile)
        profit = -math.inf if result is None else aggregator_profit(case, scheme, aggregator, result, profile)
        evaluated += 1
        if best is None or profit > best_profit + 1e-9:
            best, best_profit = choices, profit
    assert evaluated == space.count
    logger.debug(f"aggregator {aggregator}: {evaluated} strategies, best profit {best_profit:.4f}")
    return OracleResult(choices=best, profit=best_profit, evaluated=evaluated)


def payoff_table(case: MarketCase, scheme: Scheme,
                 cap: int = settings.ORACLE_PROFILE_CAP) -> Tuple[List[StrategySpace], np.ndarray]:
    """Profit of every aggregator at every joint profile.

    Shape is ``(n_1, ..., n_I, I)`` with axes in roster order.
    """
    scheme = Scheme.parse(scheme)
    spaces = [StrategySpace(case, scheme, agg) for agg in case.aggregators]
    total = math.prod(s.count for s in spaces)
    if total > cap:
        raise StrategySpaceTooLarge(f"{total} joint profiles exceed the cap of {cap}")
    strategies = [list(s) for s in spaces]
    table = np.full(tuple(s.count for s in spaces) + (len(spaces),), -math.inf)
    cascade = _Cascade(case, scheme)
    for idx in itertools.product(*(range(s.count) for s in spaces)):
        choices = {}
        for k, i in enumerate(idx):
            choices.update(strategies[k][i])
        profile = StrategyProfile(choices=choices)
        result = cascade.run(profile)
        if result is not None:
            profits = all_profits(case, scheme, result, profile)
            table[idx] = [profits[agg] for agg in case.aggregators]
    return spaces, table


def enumerate_nash(case: MarketCase, scheme: Scheme, cap: int = settings.ORACLE_PROFILE_CAP) -> List[StrategyProfile]:
    """Every pure profile no aggregator can improve on alone by more than PROFIT_TOL."""
    spaces, table = payoff_table(case, scheme, cap)
    stable = np.all(np.isfinite(table), axis=-1)
    for k in range(len(spaces)):
        own = table[..., k]
        best = np.max(own, axis=k, keepdims=True)
        stable &= own >= best - settings.PROFIT_TOL
    found = []
    strategies = [list(s) for s in spaces]
    for idx in np.argwhere(stable):
        choices = {}
        for k, i in enumerate(idx):
            choices.update(strategies[k][int(i)])
        found.append(StrategyProfile(choices=choices))
    logger.info(f"{len(found)} pure Nash profile(s) among {int(np.prod(table.shape[:-1]))}")
    return found
