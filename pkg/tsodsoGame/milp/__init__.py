from tsodsoGame.milp.model import (
    INF,
    LinExpr,
    MilpModel,
    MilpSolution,
    Sense,
    SolverConfig,
    SolveStatus,
    Var,
    VarKind,
    lin_sum,
    value_of,
)
from tsodsoGame.milp.simplex import solve_lp
from tsodsoGame.milp.branch_bound import solve_milp
from tsodsoGame.milp.mps import export_mps, import_mps

__all__ = [
    "INF", "LinExpr", "MilpModel", "MilpSolution", "Sense", "SolverConfig", "SolveStatus",
    "Var", "VarKind", "lin_sum", "value_of", "solve_lp", "solve_milp", "export_mps", "import_mps",
]
