"""
Best-response iteration over aggregators until no strategy changes.
"""

import logging
import math
from typing import Dict, Optional, Tuple

from tsodsoGame import settings
from tsodsoGame.clearing import clear_scheme, system_cost
from tsodsoGame.exceptions import ClearingError, ModelError, SolverError
from tsodsoGame.items import (
    FAMILY_ROLE,
    EquilibriumReport,
    LadderRole,
    MarketCase,
    Scheme,
    StrategyProfile,
    TraceEntry,
    slot_key,
)
from tsodsoGame.milp import SolverConfig
from tsodsoGame.mpec import solve_best_response

logger = logging.getLogger(__name__)


def initial_profile(case: MarketCase, scheme: Scheme) -> StrategyProfile:
    """Maximum-profit start: DAM, up-regulation and curtailment at their
    highest candidate, down-regulation at its lowest."""
    choices = {}
    for fam, rid in case.bidding_slots(scheme):
        prices = case.ladder(rid, FAMILY_ROLE[fam]).prices
        pick = min if FAMILY_ROLE[fam] == LadderRole.DOWN else max
        choices[slot_key(fam, rid)] = prices.index(pick(prices))
    return StrategyProfile(choices=choices)


def _incumbent_profit(case, scheme, aggregator, profile, old, config, iteration) -> float:
    try:
        return solve_best_response(case, scheme, aggregator, profile, config, fixed=old,
                                   iteration=iteration).profit
    except SolverError:
        # current strategy leaves some follower market without a solution
        return -math.inf


def find_equilibrium(case: MarketCase, scheme: Scheme, max_iter: int = settings.DEFAULT_MAX_ITER,
                     config: Optional[SolverConfig] = None, certify: bool = False) -> EquilibriumReport:
    """Sweep aggregators in roster order, each replying optimally to the
    latest rival prices, until a full sweep changes nothing."""
    scheme = Scheme.parse(scheme)
    if max_iter < 1:
        raise ModelError("max_iter must be at least 1")

    profile = initial_profile(case, scheme)
    seen = {profile.signature(): 0}
    trace = []
    converged = cycled = False
    kappa = 0

    while kappa < max_iter:
        kappa += 1
        moved = 0
        for agg in case.aggregators:
            old = profile.slice_of(case, scheme, agg)
            if not old:
                continue
            br = solve_best_response(case, scheme, agg, profile, config, iteration=kappa)
            incumbent = br.profit if br.choices == old else \
                _incumbent_profit(case, scheme, agg, profile, old, config, kappa)
            changed = br.choices != old and br.profit > incumbent + settings.PROFIT_TOL
            if changed:
                profile = profile.updated(br.choices)
                moved += 1
                diff = {k: (old[k], v) for k, v in br.choices.items() if old[k] != v}
                logger.info(f"Aggregator {agg} moved: {diff} (profit {incumbent:.2f} -> {br.profit:.2f})")
            trace.append(TraceEntry(iteration=kappa, aggregator=agg, old=old, new=br.choices,
                                    profit=br.profit, incumbent_profit=incumbent, changed=changed))
        logger.info(f"Sweep {kappa}: {moved} aggregator(s) moved")
        if moved == 0:
            converged = True
            break
        sig = profile.signature()
        if sig in seen:
            cycled = True
            logger.warning(f"profile of sweep {kappa} repeats sweep {seen[sig]}, stopping")
            break
        seen[sig] = kappa

    if not converged and not cycled:
        logger.warning(f"no equilibrium within {max_iter} sweeps")

    costs = None
    try:
        result = clear_scheme(case, scheme, profile)
        costs = system_cost(scheme, result.outcomes, case.scenarios.probabilities())
    except ClearingError as err:
        logger.warning(f"final profile does not clear: {err}")

    certified, improvements = False, {}
    if certify:
        certified, improvements = is_nash(case, scheme, profile, config)

    return EquilibriumReport(scheme=scheme, profile=profile, converged=converged, cycled=cycled,
                             iterations=kappa, trace=tuple(trace), costs=costs,
                             nash_certified=certified, improvements=improvements)


def is_nash(case: MarketCase, scheme: Scheme, profile: StrategyProfile,
            config: Optional[SolverConfig] = None) -> Tuple[bool, Dict[str, float]]:
    """True when no aggregator gains more than PROFIT_TOL by deviating alone."""
    scheme = Scheme.parse(scheme)
    improvements: Dict[str, float] = {}
    for agg in case.aggregators:
        old = profile.slice_of(case, scheme, agg)
        if not old:
            improvements[agg] = 0.0
            continue
        br = solve_best_response(case, scheme, agg, profile, config)
        incumbent = _incumbent_profit(case, scheme, agg, profile, old, config, None)
        improvements[agg] = br.profit - incumbent
        logger.debug(f"aggregator {agg}: deviation gain {improvements[agg]:.6f}")
    return all(v <= settings.PROFIT_TOL for v in improvements.values()), improvements
