"""Exception hierarchy for tsodsoGame."""

from dataclasses import dataclass
from typing import List, Optional


class TsodsoError(Exception):
    """Base class; the CLI maps it to exit code 1."""


@dataclass(frozen=True)
class Issue:
    section: str
    field: str
    reason: str

    def __str__(self) -> str:
        return f"{self.section}.{self.field}: {self.reason}"


class CaseError(TsodsoError):
    pass


class CaseValidationError(CaseError):
    """Raised when a case has fatal validation issues."""

    def __init__(self, issues: List[Issue]):
        self.issues = list(issues)
        lines = "\n  ".join(str(i) for i in self.issues)
        super().__init__(f"case has {len(self.issues)} fatal issue(s):\n  {lines}")


class SchemaVersionError(CaseError):
    pass


class ClearingError(TsodsoError):
    pass


class InfeasibleMarketError(ClearingError):
    """A market cannot restore balance or flow limits."""

    def __init__(self, market: str, scenario: Optional[str] = None, detail: str = ""):
        self.market = market
        self.scenario = scenario
        where = f"{market}" + (f", scenario {scenario}" if scenario else "")
        super().__init__(f"infeasible market ({where}){': ' + detail if detail else ''}")


class ModelError(TsodsoError, ValueError):
    """Malformed optimization model."""


class SolverError(TsodsoError):
    def __init__(self, message: str, status=None, aggregator=None, iteration=None):
        self.status = status
        self.aggregator = aggregator
        self.iteration = iteration
        ctx = []
        if aggregator is not None:
            ctx.append(f"aggregator {aggregator}")
        if iteration is not None:
            ctx.append(f"iteration {iteration}")
        if status is not None:
            ctx.append(f"status {status}")
        super().__init__(message + (f" [{', '.join(ctx)}]" if ctx else ""))


class MpsParseError(TsodsoError):
    def __init__(self, message: str, line: int, column: int = 1):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


class MissingPriceError(TsodsoError, KeyError):
    def __str__(self) -> str:
        return Exception.__str__(self)


class StrategySpaceTooLarge(TsodsoError):
    pass


class UnsupportedSchemeError(TsodsoError, ValueError):
    pass
