# Settings for the tsodsoGame project
#
# Tolerances and limits shared by the solver, the clearing code and the
# equilibrium loop. A handful of them can be overridden from the environment,
# see README.md:
#
#     TSODSO_NODE_LIMIT, TSODSO_TIME_LIMIT, TSODSO_MIP_GAP,
#     TSODSO_SIMPLEX_ITER_LIMIT, TSODSO_LOG_LEVEL

import logging
import os

logger = logging.getLogger(__name__)

PROJECT_NAME = "tsodsoGame"

CASE_SCHEMA_VERSION = 1
SUPPORTED_CASE_VERSIONS = (1,)


def _env(name: str, cast, default):
    raw = os.environ.get(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return cast(raw)
    except ValueError:
        logger.warning(f"Ignoring malformed {name}={raw!r}, using {default!r}")
        return default


# numerical tolerances
FEASIBILITY_TOL  = 1e-6
INTEGRALITY_TOL  = 1e-6
PIVOT_TOL        = 1e-9
MIP_GAP          = _env("TSODSO_MIP_GAP", float, 1e-6)
PROBABILITY_TOL  = 1e-9
PROFIT_TOL       = 1e-4      # EUR; ties within this keep the incumbent

# solver limits
NODE_LIMIT              = _env("TSODSO_NODE_LIMIT", int, 200_000)
TIME_LIMIT              = _env("TSODSO_TIME_LIMIT", float, 3600.0)   # seconds
SIMPLEX_ITERATION_LIMIT = _env("TSODSO_SIMPLEX_ITER_LIMIT", int, 50_000)
BLAND_SWITCH            = 25     # consecutive degenerate pivots before Bland's rule

# equilibrium / oracle
DEFAULT_MAX_ITER    = 50
ORACLE_STRATEGY_CAP = 10**6
ORACLE_PROFILE_CAP  = 10**5

# output
CSV_FLOAT_FORMAT = "%.6f"
LOG_LEVEL  = _env("TSODSO_LOG_LEVEL", str, "INFO").upper()
LOG_FORMAT = "%(asctime)s [%(name)s] %(levelname)s: %(message)s"
