import json

import pandas as pd
import pytest

from tsodsoGame.caseio import (
    dump_case,
    load_case,
    load_profile,
    parse_case,
    profile_from_records,
    profile_records,
    save_case,
    save_profile,
)
from tsodsoGame.cigre import REFERENCE_DAM_BIDS, build_cigre_case
from tsodsoGame.clearing import expected_cost
from tsodsoGame.cli import run_cli
from tsodsoGame.equilibrium import initial_profile
from tsodsoGame.exceptions import CaseError, CaseValidationError, SchemaVersionError, TsodsoError
from tsodsoGame.items import LadderRole, Scheme, StrategyProfile
from tsodsoGame.pipelines import ResultBundle, cost_table, price_table, read_expected_cost, write_results

UNIFORM = {f"s{k}": 1 / 7 for k in range(1, 8)}
ROWS = {
    Scheme.A: [23137.87, 16934.08, 10822.99, 5003.63, -445.83, -3371.33, -5057.00],
    Scheme.B: [21227.42, 15752.79, 10357.93, 5014.85, 724.10, -3338.82, -5008.23],
}


def case_doc(case) -> dict:
    return json.loads(dump_case(case))


# ---------------------------------------------------------------------------
# Case files
# ---------------------------------------------------------------------------
@pytest.mark.parametrize("fixture", ["monopoly", "two_layer", "corridor"])
def test_case_text_round_trip(request, fixture):
    case = request.getfixturevalue(fixture)
    text = dump_case(case)
    assert dump_case(parse_case(text)) == text


def test_save_and_load(tmp_path, two_layer):
    path = save_case(two_layer, tmp_path / "cases" / "two.json")
    back = load_case(path)
    assert back.name == "two-layer"
    assert [u.id for u in back.units] == ["UT", "UD"]
    assert back.load("LD").realized == {"s1": 23.0}


@pytest.mark.parametrize("version", [2, None])
def test_unsupported_or_missing_version(monopoly, version):
    doc = case_doc(monopoly)
    if version is None:
        del doc["version"]
    else:
        doc["version"] = version
    with pytest.raises(SchemaVersionError):
        parse_case(json.dumps(doc))


def test_malformed_json():
    with pytest.raises(CaseError, match="parse error"):
        parse_case("{not json")
    with pytest.raises(CaseError, match="parse error"):
        parse_case("[1, 2]")


def test_unknown_field_is_rejected(monopoly):
    doc = case_doc(monopoly)
    doc["units"][0]["colour"] = "red"
    with pytest.raises(CaseValidationError) as err:
        parse_case(json.dumps(doc))
    assert err.value.issues[0].section == "units"


def test_validation_can_be_deferred(monopoly):
    doc = case_doc(monopoly)
    doc["scenarios"][0]["probability"] = 0.5
    with pytest.raises(CaseValidationError, match="probabilities not normalized"):
        parse_case(json.dumps(doc))
    assert parse_case(json.dumps(doc), validate=False).scenarios.probability("s1") == 0.5


def test_missing_case_file(tmp_path):
    with pytest.raises(CaseError, match="not found"):
        load_case(tmp_path / "absent.json")


# ---------------------------------------------------------------------------
# Profiles
# ---------------------------------------------------------------------------
def test_prices_resolve_to_candidate_indices(dam_game):
    records = [{"family": "dam", "resource": "UB", "price": 62.0},
               {"family": "dam", "resource": "UA", "index": 0, "price": 50.0}]
    profile = profile_from_records(records, dam_game)
    assert profile.choices == {"dam/UB": 1, "dam/UA": 0}


@pytest.mark.parametrize("record, message", [
    ({"family": "dam", "resource": "UB", "price": 61.0}, "not a candidate"),
    ({"family": "dam", "resource": "UB", "index": 0, "price": 62.0}, "not 62.0"),
    ({"family": "bonus", "resource": "UB", "index": 0}, "unknown price family"),
    ({"family": "dam", "resource": "UB"}, "no candidate index"),
    ({"family": "dam", "resource": "UB", "index": 2}, "outside 2 candidates"),
])
def test_bad_profile_records(dam_game, record, message):
    with pytest.raises(CaseError, match=message):
        profile_from_records([record], dam_game)


def test_profile_file_round_trip(tmp_path, two_layer):
    profile = initial_profile(two_layer, Scheme.C)
    path = save_profile(profile, tmp_path / "p.json", two_layer)
    assert load_profile(path, two_layer) == profile
    assert load_profile(path) == profile
    recs = profile_records(profile, two_layer)
    assert [r["family"] + "/" + r["resource"] for r in recs] == sorted(profile.choices)
    assert {"family": "up_t", "resource": "UD", "index": 1, "price": 110.0} in recs


# ---------------------------------------------------------------------------
# Bundled case
# ---------------------------------------------------------------------------
def test_bundled_case_shape(cigre):
    assert len(cigre.network.nodes) == 54
    assert len(cigre.network.lines) == 52
    assert len(cigre.units) == 10
    assert len(cigre.flexible_loads) == 14
    assert cigre.network.distribution_systems == ["D1", "D2", "D3"]
    assert cigre.provenance["units"] == "published"
    assert cigre.provenance["network"] == "calibrated"


def test_corrected_ladders():
    verbatim = build_cigre_case().ladder("U9", LadderRole.DAM).prices
    corrected = build_cigre_case(corrected_ladders=True)
    assert verbatim == (90.20, 82.00, 106.60)
    assert corrected.ladder("U9", LadderRole.DAM).prices == pytest.approx((90.2, 98.4, 106.6))
    assert corrected.provenance["ladders"] == "calibrated"


def test_bundled_case_survives_a_file(tmp_path, cigre):
    path = save_case(cigre, tmp_path / "cigre.json")
    assert dump_case(load_case(path)) == dump_case(cigre)


# ---------------------------------------------------------------------------
# Result files
# ---------------------------------------------------------------------------
def test_empty_bundle_writes_only_the_report(tmp_path):
    manifest = write_results(ResultBundle(), tmp_path)
    assert [f["name"] for f in manifest["files"]] == ["report.json"]
    assert json.loads((tmp_path / "report.json").read_text(encoding="utf-8")) == {"scheme": None}
    assert (tmp_path / "manifest.json").is_file()


def test_result_files_are_deterministic(tmp_path):
    summary = expected_cost(dict(zip(UNIFORM, ROWS[Scheme.A])), UNIFORM)
    bundle = ResultBundle(scheme=Scheme.A, costs=cost_table(Scheme.A, summary, UNIFORM))
    first = write_results(bundle, tmp_path / "one")
    second = write_results(bundle, tmp_path / "two")
    assert first == second
    assert [f["name"] for f in first["files"]] == ["costs.csv", "report.json"]
    assert read_expected_cost(tmp_path / "one" / "costs.csv") == {"A": pytest.approx(6717.77, abs=0.01)}


def test_cost_file_needs_expected_row(tmp_path):
    path = tmp_path / "costs.csv"
    pd.DataFrame([{"scheme": "A", "scenario": "s1", "probability": 1.0, "cost": 3.0}]).to_csv(path, index=False)
    with pytest.raises(TsodsoError, match="no expected-cost row"):
        read_expected_cost(path)
    pd.DataFrame([{"scheme": "A", "cost": 3.0}]).to_csv(path, index=False)
    with pytest.raises(TsodsoError, match="missing column"):
        read_expected_cost(path)


def test_price_table(dam_game):
    df = price_table(dam_game, Scheme.A, initial_profile(dam_game, Scheme.A))
    assert list(df.columns) == ["aggregator", "resource", "family", "role", "index", "price"]
    assert len(df) == 6
    first = df.iloc[0]
    assert (first["aggregator"], first["resource"], first["family"]) == ("1", "UA", "dam")
    assert (first["role"], first["index"], first["price"]) == ("dam-sale", 1, 60.0)


# ---------------------------------------------------------------------------
# Command line
# ---------------------------------------------------------------------------
@pytest.fixture
def game_files(tmp_path, dam_game):
    case_path = save_case(dam_game, tmp_path / "game.json")
    profile_path = save_profile(initial_profile(dam_game, Scheme.A), tmp_path / "start.json", dam_game)
    return str(case_path), str(profile_path)


def test_cli_usage_errors():
    assert run_cli([]) == 2
    assert run_cli(["clear-dam"]) == 2
    assert run_cli(["best-response", "x.json", "--scheme", "D", "--aggregator", "1", "--profile", "p"]) == 2


def test_cli_missing_case(tmp_path, capsys):
    assert run_cli(["validate", str(tmp_path / "none.json")]) == 1
    assert "not found" in capsys.readouterr().err


def test_cli_bundled_case_validates_and_clears(tmp_path, capsys):
    case_path = tmp_path / "cigre.json"
    assert run_cli(["bundled-case", "--out", str(case_path)]) == 0
    assert run_cli(["validate", str(case_path)]) == 0
    assert "Errors: 0" in capsys.readouterr().out

    bids = tmp_path / "bids.json"
    bids.write_text(json.dumps([{"family": "dam", "resource": u, "price": p}
                                for u, p in REFERENCE_DAM_BIDS.items()]), encoding="utf-8")
    assert run_cli(["clear-dam", str(case_path), "--bids", str(bids)]) == 0
    out = capsys.readouterr().out
    assert "lambda = 96.80" in out


def test_cli_validate_reports_errors(tmp_path, monopoly, capsys):
    doc = case_doc(monopoly)
    doc["units"][0]["node"] = "99"
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    assert run_cli(["validate", str(path)]) == 1
    out = capsys.readouterr().out
    assert "Errors: 1" in out
    assert "dangling reference to node '99'" in out


def test_cli_best_response_agrees_with_oracle(game_files, tmp_path, capsys):
    case_path, profile_path = game_files
    out_profile = tmp_path / "next.json"
    code = run_cli(["best-response", case_path, "--scheme", "A", "--aggregator", "2",
                    "--profile", profile_path, "--oracle", "--out", str(out_profile)])
    assert code == 0
    out = capsys.readouterr().out
    assert "Profit: 1000.0000" in out
    assert "agree=true" in out
    assert "same strategy=true" in out
    assert load_profile(out_profile).index("dam", "UB") == 0


def test_cli_equilibrium_writes_results(game_files, tmp_path, capsys):
    case_path, _ = game_files
    out_dir = tmp_path / "results"
    assert run_cli(["equilibrium", case_path, "--scheme", "A", "--out", str(out_dir), "--certify"]) == 0
    assert "Status: converged after 3 sweep(s)" in capsys.readouterr().out
    manifest = json.loads((out_dir / "manifest.json").read_text(encoding="utf-8"))
    assert [f["name"] for f in manifest["files"]] == [
        "equilibrium_prices.csv", "dispatch_s1.csv", "costs.csv", "report.json"]
    report = json.loads((out_dir / "report.json").read_text(encoding="utf-8"))
    assert report["converged"] and report["nash_certified"]
    assert report["profile"]["dam/UA"] == 0 and report["profile"]["dam/UB"] == 1
    assert read_expected_cost(out_dir / "costs.csv") == {"A": pytest.approx(0.0)}


def test_cli_verify_nash_and_export(game_files, tmp_path, capsys):
    case_path, profile_path = game_files
    assert run_cli(["verify-nash", case_path, "--scheme", "A", "--profile", profile_path]) == 0
    assert "nash=false" in capsys.readouterr().out

    mps = tmp_path / "agg1.mps"
    assert run_cli(["export-mps", case_path, "--scheme", "A", "--aggregator", "1",
                    "--profile", profile_path, "--out", str(mps)]) == 0
    assert mps.read_text(encoding="utf-8").startswith("NAME          mpec_A_1")


def test_cli_compare_costs(tmp_path, capsys):
    paths = []
    for scheme, row in ROWS.items():
        summary = expected_cost(dict(zip(UNIFORM, row)), UNIFORM)
        write_results(ResultBundle(scheme=scheme, costs=cost_table(scheme, summary, UNIFORM)),
                      tmp_path / scheme.value)
        paths.append(str(tmp_path / scheme.value / "costs.csv"))
    assert run_cli(["compare-costs", *paths]) == 0
    assert "A/B = 1.0513" in capsys.readouterr().out
    assert run_cli(["compare-costs", paths[0], "--reference", "C"]) == 1


def test_empty_profile_has_no_records():
    assert profile_records(StrategyProfile()) == []
