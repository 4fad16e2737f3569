"""
Case files and strategy-profile files.

A case is one JSON document::

    {"version": 1, "name": ..., "provenance": {...},
     "network": {"nodes": [...], "lines": [...], "ptdf": [[...], ...]},
     "units": [...], "renewables": [...], "loads": [...], "ladders": [...],
     "scenarios": [{"id": "s1", "probability": 0.5}, ...],
     "aggregators": ["1", "2", ...]}

Profiles are JSON lists of ``{"family", "resource", "index", "price"}``
records; either ``index`` or ``price`` may be omitted when a case is at hand
to resolve it.
"""

import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Union

from pydantic import BaseModel, ConfigDict, ValidationError

from tsodsoGame import settings
from tsodsoGame.exceptions import CaseError, CaseValidationError, Issue, SchemaVersionError
from tsodsoGame.items import (
    FAMILY_ROLE,
    BidLadder,
    LoadPoint,
    MarketCase,
    Network,
    ProgrammableUnit,
    RenewableUnit,
    Scenario,
    ScenarioSet,
    StrategyProfile,
    slot_key,
)
from tsodsoGame.network import validate_case

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class CaseFile(BaseModel):
    model_config = ConfigDict(extra="forbid")

    version: int
    name: str = "case"
    provenance: Dict[str, str] = {}
    network: Network
    units: List[ProgrammableUnit]
    renewables: List[RenewableUnit] = []
    loads: List[LoadPoint] = []
    ladders: List[BidLadder]
    scenarios: List[Scenario]
    aggregators: List[str]

    def to_case(self) -> MarketCase:
        return MarketCase(
            name=self.name,
            network=self.network,
            units=tuple(self.units),
            renewables=tuple(self.renewables),
            loads=tuple(self.loads),
            ladders=tuple(self.ladders),
            scenarios=ScenarioSet(scenarios=tuple(self.scenarios)),
            aggregators=tuple(self.aggregators),
            provenance=dict(self.provenance),
        )

    @classmethod
    def from_case(cls, case: MarketCase) -> "CaseFile":
        return cls(
            version=settings.CASE_SCHEMA_VERSION,
            name=case.name,
            provenance=dict(case.provenance),
            network=case.network,
            units=list(case.units),
            renewables=list(case.renewables),
            loads=list(case.loads),
            ladders=list(case.ladders),
            scenarios=list(case.scenarios.scenarios),
            aggregators=list(case.aggregators),
        )


class ProfileEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    family: str
    resource: str
    index: Optional[int] = None
    price: Optional[float] = None


# ---------------------------------------------------------------------------
# Cases
# ---------------------------------------------------------------------------
def parse_case(text: str, validate: bool = True) -> MarketCase:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise CaseError(f"parse error: {err}") from None
    if not isinstance(raw, dict):
        raise CaseError("parse error: a case must be a JSON object")

    version = raw.get("version")
    if version is None:
        raise SchemaVersionError("case has no version field")
    if version not in settings.SUPPORTED_CASE_VERSIONS:
        raise SchemaVersionError(f"unsupported case version {version!r} "
                                 f"(supported: {', '.join(map(str, settings.SUPPORTED_CASE_VERSIONS))})")
    try:
        case = CaseFile.model_validate(raw).to_case()
    except ValidationError as err:
        issues = []
        for e in err.errors():
            loc = [str(p) for p in e["loc"]]
            issues.append(Issue(loc[0] if loc else "case", ".".join(loc[1:]) or "-", e["msg"]))
        raise CaseValidationError(issues) from None

    if validate:
        report = validate_case(case)
        for w in report.warnings:
            logger.warning(f"{case.name}: {w}")
        if not report.ok:
            raise CaseValidationError(report.errors)
    return case


def load_case(path: PathLike, validate: bool = True) -> MarketCase:
    """Read, schema-check and validate a case file."""
    path = Path(path)
    if not path.is_file():
        raise CaseError(f"case file not found: {path}")
    case = parse_case(path.read_text(encoding="utf-8"), validate)
    logger.info(f"Loaded case {case.name!r}: {len(case.units)} units, {len(case.flexible_loads)} flexible loads, "
                f"{len(case.scenario_ids())} scenarios")
    return case


def dump_case(case: MarketCase) -> str:
    doc = CaseFile.from_case(case).model_dump(mode="json")
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def save_case(case: MarketCase, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_case(case), encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# Profiles
# ---------------------------------------------------------------------------
def profile_from_records(records, case: Optional[MarketCase] = None) -> StrategyProfile:
    choices: Dict[str, int] = {}
    for n, rec in enumerate(records):
        try:
            entry = ProfileEntry.model_validate(rec)
        except ValidationError as err:
            raise CaseError(f"profile entry {n}: {err.errors()[0]['msg']}") from None
        if entry.family not in FAMILY_ROLE:
            raise CaseError(f"profile entry {n}: unknown price family {entry.family!r}")
        index = entry.index
        if case is not None:
            prices = case.ladder(entry.resource, FAMILY_ROLE[entry.family]).prices
            if index is None and entry.price is not None:
                matches = [a for a, p in enumerate(prices) if abs(p - entry.price) <= 1e-9]
                if not matches:
                    raise CaseError(f"profile entry {n}: {entry.price} is not a candidate for "
                                    f"{entry.family}/{entry.resource}")
                index = matches[0]
            if index is not None and not 0 <= index < len(prices):
                raise CaseError(f"profile entry {n}: index {index} outside {len(prices)} candidates")
            if index is not None and entry.price is not None and abs(prices[index] - entry.price) > 1e-9:
                raise CaseError(f"profile entry {n}: index {index} is {prices[index]}, not {entry.price}")
        if index is None:
            raise CaseError(f"profile entry {n}: no candidate index")
        choices[slot_key(entry.family, entry.resource)] = index
    return StrategyProfile(choices=choices)


def profile_records(profile: StrategyProfile, case: Optional[MarketCase] = None) -> List[dict]:
    out = []
    for key, index in sorted(profile.choices.items()):
        family, resource = key.split("/", 1)
        rec = {"family": family, "resource": resource, "index": index}
        if case is not None:
            rec["price"] = profile.price(case, family, resource)
        out.append(rec)
    return out


def load_profile(path: PathLike, case: Optional[MarketCase] = None) -> StrategyProfile:
    path = Path(path)
    if not path.is_file():
        raise CaseError(f"profile file not found: {path}")
    try:
        records = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise CaseError(f"{path}: parse error: {err}") from None
    if not isinstance(records, list):
        raise CaseError(f"{path}: a profile must be a JSON list")
    return profile_from_records(records, case)


def save_profile(profile: StrategyProfile, path: PathLike, case: Optional[MarketCase] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(profile_records(profile, case), indent=2) + "\n", encoding="utf-8")
    return path
