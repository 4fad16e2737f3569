"""
Solver-agnostic MILP container.

Variables, sparse rows, a linear objective and SOS1 sets. Rows and columns
carry an optional ``tag`` string so that the MPEC builder can map them back
to market symbols (``"nu[U3]"``, ``"g_up[U1,s2]"``, ...).
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict

from tsodsoGame import settings
from tsodsoGame.exceptions import ModelError

INF = math.inf


class VarKind(str, Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"


class Sense(str, Enum):
    LE = "<="
    EQ = "="
    GE = ">="


class SolveStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration-limit"
    NODE_LIMIT = "node-limit"
    TIME_LIMIT = "time-limit"


class SolverConfig(BaseModel):
    """Limits for one solve; defaults come from ``settings``."""

    model_config = ConfigDict(frozen=True)

    node_limit: int = settings.NODE_LIMIT
    time_limit: float = settings.TIME_LIMIT
    mip_gap: float = settings.MIP_GAP
    iteration_limit: int = settings.SIMPLEX_ITERATION_LIMIT
    first_incumbent: bool = False      # stop at the first feasible point

    @classmethod
    def from_settings(cls, **overrides) -> "SolverConfig":
        return cls(
            node_limit=settings.NODE_LIMIT,
            time_limit=settings.TIME_LIMIT,
            mip_gap=settings.MIP_GAP,
            iteration_limit=settings.SIMPLEX_ITERATION_LIMIT,
        ).model_copy(update=overrides)


# ---------------------------------------------------------------------------
# Linear expressions
# ---------------------------------------------------------------------------
class LinExpr:
    """Sparse affine expression ``sum(coef * var) + constant``."""

    __slots__ = ("terms", "constant")

    def __init__(self, terms: Optional[Dict[int, float]] = None, constant: float = 0.0):
        self.terms: Dict[int, float] = dict(terms) if terms else {}
        self.constant = float(constant)

    @classmethod
    def of(cls, obj: "Operand") -> "LinExpr":
        if isinstance(obj, LinExpr):
            return obj
        if isinstance(obj, Var):
            return cls({obj.index: 1.0})
        if isinstance(obj, (int, float, np.floating, np.integer)):
            return cls(constant=float(obj))
        raise TypeError(f"cannot build a linear expression from {type(obj).__name__}")

    def copy(self) -> "LinExpr":
        return LinExpr(self.terms, self.constant)

    def _iadd(self, other: "Operand", scale: float = 1.0) -> "LinExpr":
        o = LinExpr.of(other)
        for i, c in o.terms.items():
            self.terms[i] = self.terms.get(i, 0.0) + scale * c
        self.constant += scale * o.constant
        return self

    def __add__(self, other):
        return self.copy()._iadd(other)

    __radd__ = __add__

    def __sub__(self, other):
        return self.copy()._iadd(other, -1.0)

    def __rsub__(self, other):
        return LinExpr.of(other).copy()._iadd(self, -1.0)

    def __neg__(self):
        return self * -1.0

    def __mul__(self, k):
        if not isinstance(k, (int, float, np.floating, np.integer)):
            return NotImplemented
        k = float(k)
        return LinExpr({i: c * k for i, c in self.terms.items()}, self.constant * k)

    __rmul__ = __mul__

    def __truediv__(self, k):
        return self * (1.0 / float(k))

    @property
    def is_constant(self) -> bool:
        return all(c == 0.0 for c in self.terms.values())

    def value(self, x: Sequence[float]) -> float:
        return self.constant + sum(c * float(x[i]) for i, c in self.terms.items())

    def __repr__(self) -> str:
        parts = [f"{c:+g}*x{i}" for i, c in sorted(self.terms.items())]
        return f"LinExpr({' '.join(parts) or '0'} {self.constant:+g})"


@dataclass(frozen=True)
class Var:
    """Handle to a declared variable."""

    index: int
    name: str

    def _e(self) -> LinExpr:
        return LinExpr({self.index: 1.0})

    def __add__(self, other):
        return self._e() + other

    __radd__ = __add__

    def __sub__(self, other):
        return self._e() - other

    def __rsub__(self, other):
        return LinExpr.of(other) - self._e()

    def __neg__(self):
        return self._e() * -1.0

    def __mul__(self, k):
        return self._e() * k

    __rmul__ = __mul__


Operand = Union[LinExpr, Var, float, int]


def lin_sum(items: Iterable[Operand]) -> LinExpr:
    out = LinExpr()
    for it in items:
        out._iadd(it)
    return out


def value_of(x: Sequence[float], obj: Operand) -> float:
    """Evaluate a Var, LinExpr or plain number at ``x``."""
    if isinstance(obj, (int, float)):
        return float(obj)
    return LinExpr.of(obj).value(x)


# ---------------------------------------------------------------------------
# Model records
# ---------------------------------------------------------------------------
@dataclass
class Variable:
    name: str
    lb: float
    ub: float
    kind: VarKind = VarKind.CONTINUOUS
    tag: Optional[str] = None


@dataclass
class Constraint:
    name: str
    coefs: Dict[int, float]
    sense: Sense
    rhs: float
    tag: Optional[str] = None


@dataclass
class Sos1:
    name: str
    members: Tuple[int, ...]
    weights: Tuple[float, ...] = ()


class MilpModel:
    """Variables, rows, objective and SOS1 sets of one optimization problem."""

    def __init__(self, name: str = "model"):
        self.name = name
        self.variables: List[Variable] = []
        self.constraints: List[Constraint] = []
        self.objective: Dict[int, float] = {}
        self.objective_constant = 0.0
        self.maximize = False
        self.sos1: List[Sos1] = []
        self._index: Dict[str, int] = {}

    # --- declaration -------------------------------------------------------
    def add_var(self, name: str, lb: float = 0.0, ub: float = INF,
                kind: VarKind = VarKind.CONTINUOUS, tag: Optional[str] = None) -> Var:
        if name in self._index:
            raise ModelError(f"duplicate variable name {name!r}")
        if any(ch.isspace() for ch in name):
            raise ModelError(f"variable name {name!r} contains whitespace")
        lb, ub = float(lb), float(ub)
        if kind == VarKind.BINARY:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        if lb > ub:
            raise ModelError(f"variable {name!r} has lb {lb} > ub {ub}")
        self._index[name] = len(self.variables)
        self.variables.append(Variable(name, lb, ub, kind, tag))
        return Var(len(self.variables) - 1, name)

    def add_binary(self, name: str, tag: Optional[str] = None) -> Var:
        return self.add_var(name, 0.0, 1.0, VarKind.BINARY, tag)

    def add_constr(self, lhs: Operand, sense: Union[Sense, str], rhs: Operand = 0.0,
                   name: Optional[str] = None, tag: Optional[str] = None) -> int:
        expr = LinExpr.of(lhs) - LinExpr.of(rhs)
        coefs = {i: c for i, c in sorted(expr.terms.items()) if c != 0.0}
        for i in coefs:
            if not 0 <= i < len(self.variables):
                raise ModelError(f"row {name!r} references undeclared column {i}")
        row = len(self.constraints)
        self.constraints.append(Constraint(name or f"r{row}", coefs, Sense(sense), -expr.constant, tag))
        return row

    def set_objective(self, expr: Operand, maximize: bool = False) -> None:
        e = LinExpr.of(expr)
        self.objective = {i: c for i, c in sorted(e.terms.items()) if c != 0.0}
        self.objective_constant = e.constant
        self.maximize = maximize

    def add_sos1(self, members: Sequence[Var], name: Optional[str] = None,
                 weights: Optional[Sequence[float]] = None) -> None:
        idx = tuple(v.index if isinstance(v, Var) else int(v) for v in members)
        for i in idx:
            if not 0 <= i < len(self.variables):
                raise ModelError(f"SOS1 set references undeclared column {i}")
        w = tuple(float(x) for x in weights) if weights else tuple(float(k + 1) for k in range(len(idx)))
        self.sos1.append(Sos1(name or f"sos{len(self.sos1)}", idx, w))

    # --- queries -----------------------------------------------------------
    @property
    def num_vars(self) -> int:
        return len(self.variables)

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    def var(self, name: str) -> Var:
        try:
            return Var(self._index[name], name)
        except KeyError:
            raise ModelError(f"unknown variable {name!r}") from None

    def has_var(self, name: str) -> bool:
        return name in self._index

    def lower(self) -> np.ndarray:
        return np.array([v.lb for v in self.variables], dtype=float)

    def upper(self) -> np.ndarray:
        return np.array([v.ub for v in self.variables], dtype=float)

    def binary_indices(self) -> List[int]:
        return [j for j, v in enumerate(self.variables) if v.kind == VarKind.BINARY]

    def fix(self, var: Union[Var, int], value: float) -> None:
        j = var.index if isinstance(var, Var) else int(var)
        self.variables[j].lb = self.variables[j].ub = float(value)

    def copy(self, name: Optional[str] = None) -> "MilpModel":
        m = MilpModel(name or self.name)
        m.variables = [Variable(v.name, v.lb, v.ub, v.kind, v.tag) for v in self.variables]
        m.constraints = [Constraint(c.name, dict(c.coefs), c.sense, c.rhs, c.tag) for c in self.constraints]
        m.objective = dict(self.objective)
        m.objective_constant = self.objective_constant
        m.maximize = self.maximize
        m.sos1 = [Sos1(s.name, s.members, s.weights) for s in self.sos1]
        m._index = dict(self._index)
        return m

    def validate(self) -> None:
        for v in self.variables:
            if v.kind == VarKind.BINARY and (v.lb < 0.0 or v.ub > 1.0):
                raise ModelError(f"binary {v.name!r} has bounds outside [0, 1]")
        for s in self.sos1:
            for j in s.members:
                if self.variables[j].lb > 0.0 or self.variables[j].ub < 0.0:
                    raise ModelError(f"SOS1 member {self.variables[j].name!r} cannot take value 0")

    def objective_value(self, x: Sequence[float]) -> float:
        return self.objective_constant + sum(c * float(x[j]) for j, c in self.objective.items())

    def row_activity(self, x: Sequence[float]) -> np.ndarray:
        return np.array([sum(a * float(x[j]) for j, a in c.coefs.items()) for c in self.constraints])

    def max_violation(self, x: Sequence[float]) -> float:
        """Largest violation of rows and bounds at ``x`` (0 when feasible)."""
        x = np.asarray(x, dtype=float)
        worst = 0.0
        if len(x):
            worst = max(worst, float(np.max(self.lower() - x, initial=0.0)),
                        float(np.max(x - self.upper(), initial=0.0)))
        for c, act in zip(self.constraints, self.row_activity(x)):
            if c.sense == Sense.LE:
                worst = max(worst, act - c.rhs)
            elif c.sense == Sense.GE:
                worst = max(worst, c.rhs - act)
            else:
                worst = max(worst, abs(act - c.rhs))
        return worst

    def __repr__(self) -> str:
        return (f"MilpModel({self.name!r}, vars={self.num_vars}, rows={self.num_constraints}, "
                f"binaries={len(self.binary_indices())}, sos1={len(self.sos1)})")


@dataclass
class MilpSolution:
    """Outcome of ``solve_lp`` / ``solve_milp``.

    ``duals`` are sensitivities of the optimal objective (in the model's own
    sense) to each row's right-hand side, taken from the LP relaxation that
    produced the incumbent.
    """

    status: SolveStatus
    values: np.ndarray
    objective: float
    duals: np.ndarray
    bound: float = math.nan
    nodes: int = 0
    iterations: int = 0
    names: Tuple[str, ...] = field(default=(), repr=False)

    @property
    def is_optimal(self) -> bool:
        return self.status == SolveStatus.OPTIMAL

    @property
    def has_incumbent(self) -> bool:
        return len(self.values) > 0 and not np.isnan(self.values).any()

    def value(self, var: Union[Var, str, LinExpr]) -> float:
        if isinstance(var, str):
            return float(self.values[self.names.index(var)])
        return value_of(self.values, var)


def empty_solution(model: MilpModel, status: SolveStatus, nodes: int = 0, iterations: int = 0) -> MilpSolution:
    n, m = model.num_vars, model.num_constraints
    return MilpSolution(status, np.full(n, np.nan), math.nan, np.full(m, np.nan),
                        nodes=nodes, iterations=iterations,
                        names=tuple(v.name for v in model.variables))
