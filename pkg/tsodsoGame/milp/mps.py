"""
Free-format MPS reader/writer.

Sections: NAME, OBJSENSE, ROWS, COLUMNS (with INTORG/INTEND markers for
binaries), RHS, RANGES, BOUNDS, SOS, ENDATA. Names may not contain
whitespace. Ranged rows are read back as a pair of rows (``<row>`` and
``<row>_rng``) since the container has no ranged constraints.
"""

from typing import Dict, List, Optional, Tuple

from tsodsoGame.exceptions import MpsParseError
from tsodsoGame.milp.model import INF, LinExpr, MilpModel, Sense, VarKind

OBJ_ROW = "obj"
SECTIONS = ("NAME", "OBJSENSE", "ROWS", "COLUMNS", "RHS", "RANGES", "BOUNDS", "SOS", "ENDATA")
SENSE_CODE = {Sense.LE: "L", Sense.EQ: "E", Sense.GE: "G"}


def _num(v: float) -> str:
    return f"{float(v):.15g}"


def export_mps(model: MilpModel) -> str:
    """Render ``model`` as free MPS text (deterministic, LF line endings)."""
    out: List[str] = [f"NAME          {model.name}", "OBJSENSE", "    MAX" if model.maximize else "    MIN"]

    out.append("ROWS")
    out.append(f" N  {OBJ_ROW}")
    for con in model.constraints:
        out.append(f" {SENSE_CODE[con.sense]}  {con.name}")

    # column-major coefficients
    entries: List[List[Tuple[str, float]]] = [[] for _ in model.variables]
    for j, c in model.objective.items():
        entries[j].append((OBJ_ROW, c))
    for con in model.constraints:
        for j, a in con.coefs.items():
            entries[j].append((con.name, a))

    out.append("COLUMNS")
    in_int = False
    marker = 0
    for j, var in enumerate(model.variables):
        is_bin = var.kind == VarKind.BINARY
        if is_bin and not in_int:
            out.append(f"    MARKER{marker}  'MARKER'  'INTORG'")
            in_int = True
        elif not is_bin and in_int:
            out.append(f"    MARKER{marker}  'MARKER'  'INTEND'")
            marker += 1
            in_int = False
        for row, coef in entries[j] or [(OBJ_ROW, 0.0)]:
            out.append(f"    {var.name}  {row}  {_num(coef)}")
    if in_int:
        out.append(f"    MARKER{marker}  'MARKER'  'INTEND'")

    out.append("RHS")
    if model.objective_constant != 0.0:
        out.append(f"    RHS  {OBJ_ROW}  {_num(-model.objective_constant)}")
    for con in model.constraints:
        if con.rhs != 0.0:
            out.append(f"    RHS  {con.name}  {_num(con.rhs)}")

    out.append("BOUNDS")
    for var in model.variables:
        lb, ub = var.lb, var.ub
        if var.kind == VarKind.BINARY and lb == 0.0 and ub == 1.0:
            out.append(f" BV BND  {var.name}")
        elif lb == ub:
            out.append(f" FX BND  {var.name}  {_num(lb)}")
        elif lb == -INF and ub == INF:
            out.append(f" FR BND  {var.name}")
        else:
            if lb == -INF:
                out.append(f" MI BND  {var.name}")
            elif lb != 0.0:
                out.append(f" LO BND  {var.name}  {_num(lb)}")
            if ub != INF:
                out.append(f" UP BND  {var.name}  {_num(ub)}")

    if model.sos1:
        out.append("SOS")
        for sos in model.sos1:
            out.append(f" S1 SOS  {sos.name}  1")
            for j, w in zip(sos.members, sos.weights):
                out.append(f"    {model.variables[j].name}  {_num(w)}")

    out.append("ENDATA")
    return "\n".join(out) + "\n"


def import_mps(text: str) -> MilpModel:
    """Parse free MPS text into a ``MilpModel``; raises ``MpsParseError``."""
    name = "model"
    maximize = False
    obj_row: Optional[str] = None
    row_sense: Dict[str, Sense] = {}
    row_order: List[str] = []
    coefs: Dict[str, Dict[str, float]] = {}
    obj: Dict[str, float] = {}
    col_order: List[str] = []
    is_int: Dict[str, bool] = {}
    rhs: Dict[str, float] = {}
    ranges: Dict[str, float] = {}
    lb: Dict[str, float] = {}
    ub: Dict[str, float] = {}
    sos: List[Tuple[str, List[Tuple[str, float]]]] = []
    obj_constant = 0.0
    section: Optional[str] = None
    in_int = False
    ended = False

    def number(tok: str, lineno: int, col: int) -> float:
        try:
            return float(tok)
        except ValueError:
            raise MpsParseError(f"expected a number, got {tok!r}", lineno, col) from None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip()
        if not line.strip() or line.lstrip().startswith("*"):
            continue
        if ended:
            raise MpsParseError("content after ENDATA", lineno)
        fields = line.split()
        col_of = _columns(line)

        if not line[0].isspace():
            head = fields[0].upper()
            if head not in SECTIONS:
                raise MpsParseError(f"unknown section {fields[0]!r}", lineno)
            section = head
            if head == "NAME":
                name = fields[1] if len(fields) > 1 else name
            elif head == "OBJSENSE" and len(fields) > 1:
                maximize = _objsense(fields[1], lineno, col_of[1])
            elif head == "ENDATA":
                ended = True
            continue

        if section == "OBJSENSE":
            maximize = _objsense(fields[0], lineno, col_of[0])
        elif section == "ROWS":
            if len(fields) != 2:
                raise MpsParseError("ROWS entry needs a type and a name", lineno, col_of[0])
            code, rname = fields[0].upper(), fields[1]
            if code == "N":
                if obj_row is None:
                    obj_row = rname
                continue
            if code not in ("L", "E", "G"):
                raise MpsParseError(f"unknown row type {fields[0]!r}", lineno, col_of[0])
            if rname in row_sense:
                raise MpsParseError(f"duplicate row {rname!r}", lineno, col_of[1])
            row_sense[rname] = {"L": Sense.LE, "E": Sense.EQ, "G": Sense.GE}[code]
            row_order.append(rname)
            coefs[rname] = {}
        elif section == "COLUMNS":
            if len(fields) >= 3 and fields[1].strip("'\"").upper() == "MARKER":
                tag = fields[2].strip("'\"").upper()
                if tag not in ("INTORG", "INTEND"):
                    raise MpsParseError(f"unknown marker {fields[2]!r}", lineno, col_of[2])
                in_int = tag == "INTORG"
                continue
            if len(fields) not in (3, 5):
                raise MpsParseError("COLUMNS entry needs 3 or 5 fields", lineno, col_of[0])
            cname = fields[0]
            if cname not in is_int:
                col_order.append(cname)
                is_int[cname] = in_int
            for k in range(1, len(fields), 2):
                rname, val = fields[k], number(fields[k + 1], lineno, col_of[k + 1])
                if rname == obj_row:
                    obj[cname] = obj.get(cname, 0.0) + val
                elif rname in coefs:
                    coefs[rname][cname] = coefs[rname].get(cname, 0.0) + val
                else:
                    raise MpsParseError(f"unknown row {rname!r}", lineno, col_of[k])
        elif section in ("RHS", "RANGES"):
            pairs = fields[1:] if len(fields) % 2 == 1 else fields
            offset = 1 if len(fields) % 2 == 1 else 0
            for k in range(0, len(pairs), 2):
                rname = pairs[k]
                val = number(pairs[k + 1], lineno, col_of[offset + k + 1])
                if section == "RHS" and rname == obj_row:
                    obj_constant = -val
                elif rname not in row_sense:
                    raise MpsParseError(f"unknown row {rname!r}", lineno, col_of[offset + k])
                elif section == "RHS":
                    rhs[rname] = val
                else:
                    ranges[rname] = val
        elif section == "BOUNDS":
            if len(fields) < 3:
                raise MpsParseError("BOUNDS entry needs type, set and column", lineno, col_of[0])
            btype, cname = fields[0].upper(), fields[2]
            if cname not in is_int:
                raise MpsParseError(f"unknown column {cname!r}", lineno, col_of[2])
            needs_value = btype in ("UP", "LO", "FX")
            if needs_value and len(fields) < 4:
                raise MpsParseError(f"{btype} bound needs a value", lineno, col_of[0])
            val = number(fields[3], lineno, col_of[3]) if needs_value else 0.0
            if btype == "UP":
                ub[cname] = val
            elif btype == "LO":
                lb[cname] = val
            elif btype == "FX":
                lb[cname] = ub[cname] = val
            elif btype == "FR":
                lb[cname], ub[cname] = -INF, INF
            elif btype == "MI":
                lb[cname] = -INF
            elif btype == "PL":
                ub[cname] = INF
            elif btype == "BV":
                is_int[cname] = True
                lb[cname], ub[cname] = 0.0, 1.0
            else:
                raise MpsParseError(f"unsupported bound type {fields[0]!r}", lineno, col_of[0])
        elif section == "SOS":
            if fields[0].upper() in ("S1", "S2"):
                if fields[0].upper() != "S1":
                    raise MpsParseError("only SOS type 1 is supported", lineno, col_of[0])
                sname = fields[2] if len(fields) > 2 else f"sos{len(sos)}"
                sos.append((sname, []))
                continue
            if not sos:
                raise MpsParseError("SOS member before set header", lineno, col_of[0])
            member = fields[0]
            weight_tok = fields[1] if len(fields) > 1 else None
            if ":" in member:
                member, weight_tok = member.split(":", 1)
            if member not in is_int:
                raise MpsParseError(f"unknown column {member!r}", lineno, col_of[0])
            weight = number(weight_tok, lineno, col_of[-1]) if weight_tok else float(len(sos[-1][1]) + 1)
            sos[-1][1].append((member, weight))
        else:
            raise MpsParseError("data line outside of a section", lineno, col_of[0])

    model = MilpModel(name)
    handles = {}
    for cname in col_order:
        lo = lb.get(cname, 0.0)
        hi = ub.get(cname, 1.0 if is_int[cname] else INF)
        if is_int[cname]:
            if lo < 0.0 or hi > 1.0:
                raise MpsParseError(f"integer column {cname!r} is not binary", 0)
            handles[cname] = model.add_var(cname, lo, hi, VarKind.BINARY)
        else:
            handles[cname] = model.add_var(cname, lo, hi)

    for rname in row_order:
        expr = {handles[c].index: a for c, a in coefs[rname].items()}
        lhs = _expr(expr)
        sense, b = row_sense[rname], rhs.get(rname, 0.0)
        if rname in ranges:
            r = ranges[rname]
            if sense == Sense.EQ:
                lo_b, hi_b = (b, b + r) if r >= 0 else (b + r, b)
            elif sense == Sense.LE:
                lo_b, hi_b = b - abs(r), b
            else:
                lo_b, hi_b = b, b + abs(r)
            model.add_constr(lhs, Sense.GE, lo_b, name=rname)
            model.add_constr(lhs, Sense.LE, hi_b, name=f"{rname}_rng")
        else:
            model.add_constr(lhs, sense, b, name=rname)

    model.set_objective(_expr({handles[c].index: a for c, a in obj.items()}) + obj_constant, maximize)
    for sname, members in sos:
        model.add_sos1([handles[c] for c, _ in members], name=sname, weights=[w for _, w in members])
    return model


def _expr(terms: Dict[int, float]) -> LinExpr:
    return LinExpr(terms)


def _objsense(tok: str, lineno: int, col: int) -> bool:
    t = tok.upper()
    if t in ("MAX", "MAXIMIZE"):
        return True
    if t in ("MIN", "MINIMIZE"):
        return False
    raise MpsParseError(f"unknown objective sense {tok!r}", lineno, col)


def _columns(line: str) -> List[int]:
    """1-based start column of each whitespace-separated field."""
    cols, inside = [], False
    for i, ch in enumerate(line):
        if not ch.isspace() and not inside:
            cols.append(i + 1)
            inside = True
        elif ch.isspace():
            inside = False
    return cols or [1]
