"""
Command-line surface.

    tsodso.py validate <case>
    tsodso.py clear-dam <case> --bids <profile>
    tsodso.py clear-asm <case> --scheme A|B|C --scenario <id> --profile <file>
    tsodso.py best-response <case> --scheme A --aggregator <id> --profile <file> [--oracle]
    tsodso.py equilibrium <case> --scheme A --max-iter 50 --out <dir>
    tsodso.py verify-nash <case> --scheme A --profile <file>
    tsodso.py export-mps <case> --scheme A --aggregator <id> --profile <file> --out <file>
    tsodso.py bundled-case --out <file> [--corrected-ladders]
    tsodso.py compare-costs <costs.csv> [<costs.csv> ...] [--reference B]

Exit codes: 0 success, 1 domain error, 2 usage error.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from tsodsoGame import settings
from tsodsoGame.caseio import load_case, load_profile, save_case, save_profile
from tsodsoGame.cigre import build_cigre_case
from tsodsoGame.clearing import (
    clear_dam,
    clear_scenario,
    clear_scheme,
    cost_ratios,
    system_cost,
)
from tsodsoGame.equilibrium import find_equilibrium, is_nash
from tsodsoGame.exceptions import TsodsoError
from tsodsoGame.items import Scheme
from tsodsoGame.milp import SolverConfig, export_mps
from tsodsoGame.mpec import build_mpec, solve_best_response
from tsodsoGame.network import dam_flows, overloaded_lines, validate_case
from tsodsoGame.oracle import enumerate_best_response
from tsodsoGame.pipelines import (
    ResultBundle,
    cost_table,
    dispatch_table,
    price_table,
    read_expected_cost,
    write_results,
)

logger = logging.getLogger(__name__)

AGREEMENT_TOL = 1e-4


def _scheme(tag: str) -> Scheme:
    try:
        return Scheme.parse(tag)
    except TsodsoError as err:
        raise argparse.ArgumentTypeError(str(err)) from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tsodso", description="Strategic bidding of aggregators in coupled "
                                                            "TSO-DSO energy and services markets.")
    ap.add_argument("--verbose", "-v", action="store_true", help="Log solver detail (DEBUG).")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="Check a case file and list every issue.")
    p.add_argument("case")

    p = sub.add_parser("clear-dam", help="Clear the day-ahead market for given bids.")
    p.add_argument("case")
    p.add_argument("--bids", required=True, help="Profile file with (at least) the dam family.")

    p = sub.add_parser("clear-asm", help="Clear one scenario's services markets.")
    p.add_argument("case")
    p.add_argument("--scheme", type=_scheme, required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--profile", required=True)
    p.add_argument("--out", default=None, help="Optional CSV for the dispatch table.")

    p = sub.add_parser("best-response", help="Solve one aggregator's bidding problem.")
    p.add_argument("case")
    p.add_argument("--scheme", type=_scheme, required=True)
    p.add_argument("--aggregator", required=True)
    p.add_argument("--profile", required=True)
    p.add_argument("--oracle", action="store_true", help="Cross-check against brute-force enumeration.")
    p.add_argument("--out", default=None, help="Write the updated profile here.")

    p = sub.add_parser("equilibrium", help="Run best-response iteration to a pure equilibrium.")
    p.add_argument("case")
    p.add_argument("--scheme", type=_scheme, required=True)
    p.add_argument("--max-iter", type=int, default=settings.DEFAULT_MAX_ITER)
    p.add_argument("--out", default="./results")
    p.add_argument("--certify", action="store_true", help="Re-check the final profile with is_nash.")

    p = sub.add_parser("verify-nash", help="Check a profile for profitable unilateral deviations.")
    p.add_argument("case")
    p.add_argument("--scheme", type=_scheme, required=True)
    p.add_argument("--profile", required=True)

    p = sub.add_parser("export-mps", help="Write one aggregator's MILP as MPS.")
    p.add_argument("case")
    p.add_argument("--scheme", type=_scheme, required=True)
    p.add_argument("--aggregator", required=True)
    p.add_argument("--profile", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("bundled-case", help="Write the bundled transmission/distribution test case.")
    p.add_argument("--out", required=True)
    p.add_argument("--corrected-ladders", action="store_true")

    p = sub.add_parser("compare-costs", help="Expected-cost ratios between schemes.")
    p.add_argument("costs", nargs="+", help="costs.csv files written by 'equilibrium'.")
    p.add_argument("--reference", default="B")
    return ap


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------
def cmd_validate(args) -> int:
    case = load_case(args.case, validate=False)
    report = validate_case(case)
    print("\n=== Case Validation ===")
    print(f"Case: {case.name}")
    print(f"Errors: {len(report.errors)}  Warnings: {len(report.warnings)}")
    for issue in report.errors:
        print(f"  error   {issue}")
    for issue in report.warnings:
        print(f"  warning {issue}")
    return 0 if report.ok else 1


def cmd_clear_dam(args) -> int:
    case = load_case(args.case)
    dam = clear_dam(case, load_profile(args.bids, case))
    print("\n=== DAM Clearing ===")
    print(f"lambda = {dam.price:.2f}")
    for uid, g in dam.dispatch.items():
        print(f"  {uid:<6} g={g:>10.4f}  nu={dam.capacity_duals[uid]:.4f}")
    over = overloaded_lines(case, dam_flows(case, dam))
    print(f"Overloaded lines at forecast: {', '.join(over) if over else 'none'}")
    return 0


def cmd_clear_asm(args) -> int:
    case = load_case(args.case)
    profile = load_profile(args.profile, case)
    dam = clear_dam(case, profile)
    outcome = clear_scenario(case, args.scheme, dam, profile, args.scenario)
    print(f"\n=== Services Markets (scheme {args.scheme.value}, {args.scenario}) ===")
    for m in outcome.markets:
        print(f"  {m.market:<4} cost={m.objective:>12.2f}  alpha={m.balance_dual:.2f}")
    print(f"Total: {outcome.cost:.2f}")
    if args.out:
        dispatch_table(outcome).to_csv(args.out, index=False, lineterminator="\n",
                                       float_format=settings.CSV_FLOAT_FORMAT)
        print(f"Dispatch CSV: {args.out}")
    return 0


def cmd_best_response(args) -> int:
    case = load_case(args.case)
    profile = load_profile(args.profile, case)
    br = solve_best_response(case, args.scheme, args.aggregator, profile, SolverConfig.from_settings())
    print(f"\n=== Best Response (aggregator {args.aggregator}, scheme {args.scheme.value}) ===")
    print(f"Profit: {br.profit:.4f}  nodes={br.solution.nodes}  status={br.solution.status.value}")
    for key, idx in br.choices.items():
        print(f"  {key:<20} index={idx}")
    if args.oracle:
        ref = enumerate_best_response(case, args.scheme, args.aggregator, profile)
        agree = abs(ref.profit - br.profit) <= AGREEMENT_TOL
        print(f"Oracle profit: {ref.profit:.4f} over {ref.evaluated} strategies")
        print(f"same strategy={'true' if ref.choices == br.choices else 'false'}")
        print(f"agree={'true' if agree else 'false'}")
    if args.out:
        save_profile(profile.updated(br.choices), args.out, case)
        print(f"Profile: {args.out}")
    return 0


def cmd_equilibrium(args) -> int:
    case = load_case(args.case)
    report = find_equilibrium(case, args.scheme, args.max_iter, SolverConfig.from_settings(), certify=args.certify)
    bundle = ResultBundle(scheme=args.scheme, report=report,
                          prices=price_table(case, args.scheme, report.profile))
    try:
        result = clear_scheme(case, args.scheme, report.profile)
        for outcome in result.outcomes:
            bundle.dispatch[outcome.scenario] = dispatch_table(outcome)
        summary = system_cost(args.scheme, result.outcomes, case.scenarios.probabilities())
        bundle.costs = cost_table(args.scheme, summary, case.scenarios.probabilities())
    except TsodsoError as err:
        logger.warning(f"final profile not cleared: {err}")
    manifest = write_results(bundle, args.out)

    print(f"\n=== Equilibrium (scheme {args.scheme.value}) ===")
    state = "converged" if report.converged else ("cycled" if report.cycled else "not converged")
    print(f"Status: {state} after {report.iterations} sweep(s)")
    if report.costs:
        print(f"Expected cost: {report.costs.expected:.2f}")
    if args.certify:
        print(f"Nash certified: {report.nash_certified}")
    print(f"Output: {Path(args.out).resolve()}")
    for f in manifest["files"]:
        print(f"  {f['name']:<24} {f['sha256'][:12]}")
    return 0


def cmd_verify_nash(args) -> int:
    case = load_case(args.case)
    profile = load_profile(args.profile, case)
    ok, improvements = is_nash(case, args.scheme, profile, SolverConfig.from_settings())
    print(f"\n=== Nash Check (scheme {args.scheme.value}) ===")
    for agg, gain in improvements.items():
        print(f"  aggregator {agg:<4} best deviation gain {gain:.6f}")
    print(f"nash={'true' if ok else 'false'}")
    return 0


def cmd_export_mps(args) -> int:
    case = load_case(args.case)
    instance = build_mpec(case, args.scheme, args.aggregator, load_profile(args.profile, case))
    Path(args.out).write_text(export_mps(instance.model), encoding="utf-8")
    print("\n=== MPS Export ===")
    print(f"{instance.model!r}")
    print(f"File: {args.out}")
    return 0


def cmd_bundled_case(args) -> int:
    case = build_cigre_case(corrected_ladders=args.corrected_ladders)
    path = save_case(case, args.out)
    print(f"Bundled case {case.name!r} written to {path}")
    return 0


def cmd_compare_costs(args) -> int:
    expected = {}
    for path in args.costs:
        expected.update(read_expected_cost(path))
    if args.reference not in expected:
        raise TsodsoError(f"no expected cost for reference scheme {args.reference}")
    print("\n=== Expected System Costs ===")
    for scheme, cost in sorted(expected.items()):
        print(f"  {scheme}: {cost:.2f}")
    for scheme, ratio in sorted(cost_ratios(expected, args.reference).items()):
        print(f"  {scheme}/{args.reference} = {ratio:.4f}")
    return 0


COMMANDS = {
    "validate": cmd_validate,
    "clear-dam": cmd_clear_dam,
    "clear-asm": cmd_clear_asm,
    "best-response": cmd_best_response,
    "equilibrium": cmd_equilibrium,
    "verify-nash": cmd_verify_nash,
    "export-mps": cmd_export_mps,
    "bundled-case": cmd_bundled_case,
    "compare-costs": cmd_compare_costs,
}


def run_cli(argv: Optional[List[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    logging.basicConfig(level=logging.DEBUG if args.verbose else settings.LOG_LEVEL,
                        format=settings.LOG_FORMAT, stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except TsodsoError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
