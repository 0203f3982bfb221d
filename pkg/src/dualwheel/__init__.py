"""Numerical consumer-theory duality engine.

Builds every function of the duality wheel (direct and indirect utility,
expenditure, distance, Marshallian/Hicksian demand, the two inverse demand
systems) from a single parsed utility expression, executes transitions
among them, and verifies the classical identities to numerical tolerance.
"""

from .errors import (
    AmbiguityError,
    BracketError,
    ConvergenceError,
    DomainError,
    DualityError,
    InfeasibleError,
    MonotonicityError,
    NoOracleError,
    NoPathError,
    ParamError,
    ParseError,
)
from .exprdsl import UtilityExpr, eval_utility, format_expr, gradient, parse_utility
from .numkit import (
    PriceIncome,
    NormalizedPrices,
    SolveResult,
    brent_root,
    central_diff,
    grid_oracle_budget,
    maximize_on_budget,
    minimize_expenditure,
)
from .wheelcore import WheelSession, plan_path, EDGES, NODES
from .families import FamilyInstance, make_family, oracle_eval

__version__ = "0.1.0"

__all__ = [
    "AmbiguityError",
    "BracketError",
    "ConvergenceError",
    "DomainError",
    "DualityError",
    "InfeasibleError",
    "MonotonicityError",
    "NoOracleError",
    "NoPathError",
    "ParamError",
    "ParseError",
    "UtilityExpr",
    "eval_utility",
    "format_expr",
    "gradient",
    "parse_utility",
    "PriceIncome",
    "NormalizedPrices",
    "SolveResult",
    "brent_root",
    "central_diff",
    "grid_oracle_budget",
    "maximize_on_budget",
    "minimize_expenditure",
    "WheelSession",
    "plan_path",
    "EDGES",
    "NODES",
    "FamilyInstance",
    "make_family",
    "oracle_eval",
    "__version__",
]
