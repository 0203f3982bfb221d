"""Exception taxonomy shared by every layer of the engine.

The `kind` attribute is the machine-readable tag used in CLI / HTTP error
payloads, so it must stay stable.
"""

from __future__ import annotations


class DualityError(Exception):
    """Base class for all engine-raised errors."""

    kind = "internal_error"


class ParseError(DualityError):
    """Malformed utility expression text."""

    kind = "parse_error"

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at offset {position})")
        self.position = position


class DomainError(DualityError):
    """An evaluation left the mathematical domain (ln of nonpositive,
    division by zero, zero to a negative power, vanishing denominator)."""

    kind = "domain_error"


class ConvergenceError(DualityError):
    """All solver stages failed to produce a usable optimum or root."""

    kind = "convergence_error"


class InfeasibleError(DualityError):
    """The requested utility level is not attainable on the search box."""

    kind = "infeasible_error"


class BracketError(DualityError):
    """Root bracketing failed: no sign change on the given interval."""

    kind = "bracket_error"


class MonotonicityError(DualityError):
    """Utility is not strictly increasing along the ray through the bundle."""

    kind = "monotonicity_error"


class AmbiguityError(DualityError):
    """A system inversion found several residual-equal distinct roots
    (multi-valued demand, the non-convex regime)."""

    kind = "ambiguity_error"

    def __init__(self, message: str, roots=None):
        super().__init__(message)
        self.roots = list(roots) if roots is not None else []


class NoPathError(DualityError):
    """No chain of implemented transitions connects the two wheel nodes."""

    kind = "no_path_error"


class NoOracleError(DualityError):
    """The preference family carries no analytic oracle for that function."""

    kind = "no_oracle_error"


class ParamError(DualityError):
    """Invalid parameters for a built-in preference family."""

    kind = "param_error"
