from pathlib import Path

import pytest

from tsodsoGame.exceptions import MpsParseError
from tsodsoGame.milp import MilpModel, Sense, VarKind, export_mps, import_mps, lin_sum, solve_milp

FIXTURES = Path(__file__).parent / "test_fixtures"

VALUES = [10, 13, 7, 8]
WEIGHTS = [5, 6, 4, 3]


def knapsack() -> MilpModel:
    m = MilpModel("knapsack")
    xs = [m.add_binary(f"x{i}") for i in range(len(VALUES))]
    s = m.add_var("s", 0.0, 2.0)
    m.add_constr(lin_sum(w * x for w, x in zip(WEIGHTS, xs)) - s, Sense.LE, 10, name="cap")
    m.set_objective(lin_sum(v * x for v, x in zip(VALUES, xs)) - 4 * s, maximize=True)
    m.add_sos1(xs[:2], name="pick")
    return m


def test_golden_export():
    expected = (FIXTURES / "knapsack.mps").read_text(encoding="utf-8")
    assert export_mps(knapsack()) == expected


def test_empty_model_has_bare_sections():
    assert export_mps(MilpModel("empty")).splitlines() == [
        "NAME          empty", "OBJSENSE", "    MIN", "ROWS", " N  obj", "COLUMNS", "RHS", "BOUNDS", "ENDATA",
    ]


def test_round_trip_is_lossless():
    text = export_mps(knapsack())
    back = import_mps(text)
    assert export_mps(back) == text
    assert back.maximize
    assert [v.kind for v in back.variables] == [VarKind.BINARY] * 4 + [VarKind.CONTINUOUS]
    assert back.sos1[0].name == "pick"


def test_round_trip_solves_to_same_optimum():
    original = solve_milp(knapsack())
    reread = solve_milp(import_mps(export_mps(knapsack())))
    # x1 and x3 fill the knapsack; the SOS set forbids pairing x0 with x1
    assert original.objective == pytest.approx(21.0)
    assert reread.objective == pytest.approx(original.objective)


def test_reads_ranges_and_bound_types():
    text = "\n".join([
        "* comment lines are skipped",
        "NAME ranged",
        "ROWS",
        " N  cost",
        " L  lim",
        "COLUMNS",
        "    a  cost  1  lim  1",
        "    b  cost  2  lim  1",
        "RHS",
        "    RHS  lim  8",
        "RANGES",
        "    RNG  lim  3",
        "BOUNDS",
        " FR BND  a",
        " MI BND  b",
        " UP BND  b  4",
        "ENDATA",
    ])
    m = import_mps(text)
    assert [c.name for c in m.constraints] == ["lim", "lim_rng"]
    assert m.constraints[0].sense == Sense.GE and m.constraints[0].rhs == 5.0
    assert m.constraints[1].sense == Sense.LE and m.constraints[1].rhs == 8.0
    assert m.variables[1].lb == float("-inf") and m.variables[1].ub == 4.0


def test_unknown_section_reports_line():
    with pytest.raises(MpsParseError) as err:
        import_mps("NAME x\nFOO\n")
    assert err.value.line == 2


def test_unknown_row_reports_line_and_column():
    text = "NAME t\nROWS\n N  obj\nCOLUMNS\n    x  c1  1\nENDATA\n"
    with pytest.raises(MpsParseError) as err:
        import_mps(text)
    assert (err.value.line, err.value.column) == (5, 8)


def test_bad_number_is_rejected():
    text = "NAME t\nROWS\n N  obj\nCOLUMNS\n    x  obj  abc\nENDATA\n"
    with pytest.raises(MpsParseError, match="expected a number"):
        import_mps(text)


def test_content_after_endata_is_rejected():
    with pytest.raises(MpsParseError):
        import_mps("NAME t\nENDATA\nROWS\n")
