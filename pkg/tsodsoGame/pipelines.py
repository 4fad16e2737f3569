import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Union

import pandas as pd

from tsodsoGame import settings
from tsodsoGame.exceptions import TsodsoError
from tsodsoGame.items import (
    FAMILY_ROLE,
    CostSummary,
    EquilibriumReport,
    MarketCase,
    ScenarioOutcome,
    Scheme,
    StrategyProfile,
)

logger = logging.getLogger(__name__)

PRICE_COLUMNS = ["aggregator", "resource", "family", "role", "index", "price"]
DISPATCH_COLUMNS = ["scenario", "market", "resource", "kind", "quantity"]
COST_COLUMNS = ["scheme", "scenario", "probability", "cost"]


@dataclass
class ResultBundle:
    """Everything one equilibrium run writes out. Any part may be missing."""

    scheme: Optional[Scheme] = None
    report: Optional[EquilibriumReport] = None
    prices: Optional[pd.DataFrame] = None
    dispatch: Dict[str, pd.DataFrame] = field(default_factory=dict)     # scenario id -> table
    costs: Optional[pd.DataFrame] = None


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------
def price_table(case: MarketCase, scheme: Scheme, profile: StrategyProfile) -> pd.DataFrame:
    """Selected bid per (aggregator, resource, family), roster order."""
    rows = []
    for agg in case.aggregators:
        for fam, rid in case.bidding_slots(scheme, agg):
            if not profile.has(fam, rid):
                continue
            rows.append({
                "aggregator": agg,
                "resource": rid,
                "family": fam,
                "role": FAMILY_ROLE[fam].value,
                "index": profile.index(fam, rid),
                "price": profile.price(case, fam, rid),
            })
    return pd.DataFrame(rows, columns=PRICE_COLUMNS)


def dispatch_table(outcome: ScenarioOutcome) -> pd.DataFrame:
    rows = []
    for market in outcome.markets:
        for kind in ("up", "down", "curtail", "spill"):
            for rid, q in getattr(market, kind).items():
                rows.append({"scenario": outcome.scenario, "market": market.market, "resource": rid,
                             "kind": kind, "quantity": q})
    return pd.DataFrame(rows, columns=DISPATCH_COLUMNS)


def cost_table(scheme: Scheme, summary: CostSummary, probabilities: Mapping[str, float]) -> pd.DataFrame:
    """One row per scenario and a final ``expected`` row."""
    tag = Scheme.parse(scheme).value
    rows = [{"scheme": tag, "scenario": s, "probability": probabilities[s], "cost": c}
            for s, c in summary.per_scenario.items()]
    rows.append({"scheme": tag, "scenario": "expected",
                 "probability": sum(probabilities[s] for s in summary.per_scenario), "cost": summary.expected})
    return pd.DataFrame(rows, columns=COST_COLUMNS)


def report_document(bundle: ResultBundle) -> dict:
    doc = {"scheme": bundle.scheme.value if bundle.scheme else None}
    rep = bundle.report
    if rep is None:
        return doc
    doc.update({
        "converged": rep.converged,
        "cycled": rep.cycled,
        "iterations": rep.iterations,
        "nash_certified": rep.nash_certified,
        "improvements": rep.improvements,
        "expected_cost": rep.costs.expected if rep.costs else None,
        "scenario_costs": rep.costs.per_scenario if rep.costs else None,
        "profile": dict(sorted(rep.profile.choices.items())),
        "trace": [t.model_dump(mode="json") for t in rep.trace],
    })
    return doc


# ---------------------------------------------------------------------------
# Writers
# ---------------------------------------------------------------------------
def sha256_of(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class ResultFilesPipeline:
    """
    Writes tables as CSV and documents as JSON into one directory and
    records each file with its SHA-256 hash.
    """

    def __init__(self, out_dir: Union[str, Path]):
        self.out_dir = Path(out_dir)
        self.files: List[dict] = []

    def open(self):
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as err:
            raise TsodsoError(f"cannot create {self.out_dir}: {err}") from None

    def write_table(self, name: str, df: pd.DataFrame):
        path = self.out_dir / name
        df.to_csv(path, index=False, lineterminator="\n", encoding="utf-8",
                  float_format=settings.CSV_FLOAT_FORMAT)
        self._record(path)

    def write_json(self, name: str, doc):
        path = self.out_dir / name
        path.write_text(json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
        self._record(path)

    def _record(self, path: Path):
        self.files.append({"name": path.name, "sha256": sha256_of(path), "bytes": path.stat().st_size})
        logger.debug(f"wrote {path}")

    def close(self) -> dict:
        manifest = {"files": self.files}
        (self.out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                                    encoding="utf-8")
        return manifest


def write_results(bundle: ResultBundle, out_dir: Union[str, Path]) -> dict:
    """Write a bundle under stable file names; returns the manifest."""
    writer = ResultFilesPipeline(out_dir)
    writer.open()
    if bundle.prices is not None:
        writer.write_table("equilibrium_prices.csv", bundle.prices)
    for k, df in enumerate(bundle.dispatch.values(), start=1):
        writer.write_table(f"dispatch_s{k}.csv", df)
    if bundle.costs is not None:
        writer.write_table("costs.csv", bundle.costs)
    writer.write_json("report.json", report_document(bundle))
    return writer.close()


def read_expected_cost(path: Union[str, Path]) -> Dict[str, float]:
    """(scheme -> expected cost) from a ``costs.csv`` written above."""
    df = pd.read_csv(path)
    missing = [c for c in COST_COLUMNS if c not in df.columns]
    if missing:
        raise TsodsoError(f"{path}: missing column(s) {', '.join(missing)}")
    rows = df[df["scenario"] == "expected"]
    if rows.empty:
        raise TsodsoError(f"{path}: no expected-cost row")
    return {str(r["scheme"]): float(r["cost"]) for _, r in rows.iterrows()}
