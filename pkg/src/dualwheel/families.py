"""Built-in parametric preference families with analytic oracle formulas.

The oracles are closed forms derived from first-order conditions and are the
ground truth used by tests. Each instance self-checks its own oracles at
construction (budget exhaustion, expenditure/indirect-utility round trip,
Shephard and Roy by finite differences) on a handful of fixed points, so a
wrong closed form fails fast rather than silently blessing the engine.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import lambertw

from .errors import NoOracleError, ParamError
from .exprdsl import UtilityExpr, parse_utility
from . import numkit

_ORACLE_NODES = ("MDF", "HDF", "IUF", "EF", "DF")


@dataclass(frozen=True)
class FamilyInstance:
    name: str
    params: dict
    utility: UtilityExpr
    text: str
    oracles: dict = field(repr=False)

    def has_oracle(self, which: str) -> bool:
        return which in self.oracles


def oracle_eval(instance: FamilyInstance, which: str, *point):
    """Analytic value of the requested wheel function at the point.

    Point layout per node: MDF/IUF take (P, M); HDF/EF take (P, u);
    DF takes (q, u).
    """
    if which not in instance.oracles:
        raise NoOracleError(
            f"family {instance.name!r} has no analytic oracle for {which}"
        )
    return instance.oracles[which](*point)


def _fmt(v: float) -> str:
    return repr(float(v))


def _cobb_douglas(params: dict) -> tuple[str, dict, dict]:
    a = params.get("a")
    if a is None:
        a1 = params.get("a1", 0.5)
        a = (float(a1), 1.0 - float(a1))
    a = tuple(float(x) for x in a)
    if len(a) < 2 or len(a) > 4 or any(x <= 0 for x in a):
        raise ParamError("cobb_douglas needs 2..4 positive exponents")
    if abs(sum(a) - 1.0) > 1e-12:
        raise ParamError("cobb_douglas exponents must sum to 1")
    text = "*".join(f"q{i + 1}^{_fmt(x)}" for i, x in enumerate(a))
    av = np.asarray(a)

    def mdf(P, M):
        return av * M / np.asarray(P, dtype=float)

    def iuf(P, M):
        P = np.asarray(P, dtype=float)
        return float(M * np.prod((av / P) ** av))

    def ef(P, u):
        P = np.asarray(P, dtype=float)
        return float(u * np.prod((P / av) ** av))

    def hdf(P, u):
        P = np.asarray(P, dtype=float)
        return ef(P, u) * av / P

    def df(q, u):
        q = np.asarray(q, dtype=float)
        return float(np.prod(q**av) / u)

    oracles = {"MDF": mdf, "IUF": iuf, "EF": ef, "HDF": hdf, "DF": df}
    return text, dict(a=a), oracles


def _ces(params: dict) -> tuple[str, dict, dict]:
    a = float(params.get("a", 0.5))
    rho = float(params.get("rho", 0.5))
    if not 0 < a < 1:
        raise ParamError("ces share a must lie in (0, 1)")
    if rho == 0 or not -5 < rho < 1:
        raise ParamError("ces rho must lie in (-5, 1) excluding 0")
    b = 1.0 - a
    sigma = 1.0 / (1.0 - rho)
    text = f"({_fmt(a)}*q1^{_fmt(rho)}+{_fmt(b)}*q2^{_fmt(rho)})^{_fmt(1.0 / rho)}"
    ab = np.array([a, b])

    def _denom(P):
        return float(np.sum(ab**sigma * P ** (1.0 - sigma)))

    def mdf(P, M):
        P = np.asarray(P, dtype=float)
        return M * (ab / P) ** sigma / _denom(P)

    def iuf(P, M):
        P = np.asarray(P, dtype=float)
        return float(M * _denom(P) ** (-1.0 / (1.0 - sigma)))

    def ef(P, u):
        P = np.asarray(P, dtype=float)
        return float(u * _denom(P) ** (1.0 / (1.0 - sigma)))

    def hdf(P, u):
        P = np.asarray(P, dtype=float)
        return u * _denom(P) ** (sigma / (1.0 - sigma)) * ab**sigma * P ** (-sigma)

    def df(q, u):
        q = np.asarray(q, dtype=float)
        return float((a * q[0] ** rho + b * q[1] ** rho) ** (1.0 / rho) / u)

    oracles = {"MDF": mdf, "IUF": iuf, "EF": ef, "HDF": hdf, "DF": df}
    return text, dict(a=a, rho=rho), oracles


def _quasilinear(params: dict) -> tuple[str, dict, dict]:
    if params:
        raise ParamError("quasilinear takes no parameters")
    text = "q1+ln(q2)"

    # interior regime (M > P1); oracles return NaN outside it
    def mdf(P, M):
        P = np.asarray(P, dtype=float)
        if M <= P[0]:
            return np.array([np.nan, np.nan])
        return np.array([M / P[0] - 1.0, P[0] / P[1]])

    def iuf(P, M):
        P = np.asarray(P, dtype=float)
        if M <= P[0]:
            return float(np.log(M / P[1]))
        return float(M / P[0] - 1.0 + np.log(P[0] / P[1]))

    def hdf(P, u):
        P = np.asarray(P, dtype=float)
        q1 = u - np.log(P[0] / P[1])
        if q1 <= 0:
            return np.array([np.nan, np.nan])
        return np.array([q1, P[0] / P[1]])

    def ef(P, u):
        P = np.asarray(P, dtype=float)
        q1 = u - np.log(P[0] / P[1])
        if q1 <= 0:
            return float(P[1] * np.exp(u))
        return float(P[0] * (q1 + 1.0))

    def df(q, u):
        # q1/D + ln(q2/D) = u solved in closed form with Lambert W
        q = np.asarray(q, dtype=float)
        w = lambertw(q[0] * np.exp(u) / q[1])
        return float(q[0] / np.real(w))

    oracles = {"MDF": mdf, "IUF": iuf, "EF": ef, "HDF": hdf, "DF": df}
    return text, {}, oracles


def _nonconvex_demo(params: dict) -> tuple[str, dict, dict]:
    if params:
        raise ParamError("nonconvex_demo takes no parameters")
    text = "q1^2+q2^2"

    # demand is corner-valued, so no demand oracle; value functions only
    def iuf(P, M):
        P = np.asarray(P, dtype=float)
        return float((M / np.min(P)) ** 2)

    def ef(P, u):
        P = np.asarray(P, dtype=float)
        return float(np.min(P) * np.sqrt(u)) if u > 0 else 0.0

    def df(q, u):
        q = np.asarray(q, dtype=float)
        return float(np.sqrt((q[0] ** 2 + q[1] ** 2) / u))

    oracles = {"IUF": iuf, "EF": ef, "DF": df}
    return text, {}, oracles


_BUILDERS: dict[str, Callable[[dict], tuple[str, dict, dict]]] = {
    "cobb_douglas": _cobb_douglas,
    "ces": _ces,
    "quasilinear": _quasilinear,
    "nonconvex_demo": _nonconvex_demo,
}

_CHECK_POINTS = [
    (np.array([1.0, 1.0]), 2.0),
    (np.array([1.0, 4.0]), 8.0),
    (np.array([2.0, 1.0]), 10.0),
    (np.array([0.5, 3.0]), 7.0),
    (np.array([3.0, 0.7]), 25.0),
]


def _self_check(inst: FamilyInstance) -> None:
    """Consistency of the oracle set with itself (not with the engine)."""
    for P, M in _CHECK_POINTS:
        if inst.has_oracle("MDF"):
            x = np.asarray(oracle_eval(inst, "MDF", P, M), dtype=float)
            if np.any(np.isnan(x)):
                continue
            assert abs(P @ x - M) < 1e-9 * M, f"{inst.name}: budget not exhausted"
        if inst.has_oracle("IUF") and inst.has_oracle("EF"):
            v = oracle_eval(inst, "IUF", P, M)
            e = oracle_eval(inst, "EF", P, v)
            assert abs(e - M) < 1e-8 * M, f"{inst.name}: E(P, V(P,M)) != M"
        if inst.has_oracle("EF") and inst.has_oracle("HDF"):
            v = oracle_eval(inst, "IUF", P, M)
            xc = np.asarray(oracle_eval(inst, "HDF", P, v), dtype=float)
            if np.any(np.isnan(xc)):
                continue
            for i in range(P.size):
                fd = numkit.central_diff(
                    lambda Pv: oracle_eval(inst, "EF", Pv, v), P, i
                )
                assert abs(fd - xc[i]) < 1e-5 * max(1.0, abs(xc[i])), (
                    f"{inst.name}: oracle EF derivative mismatch with oracle HDF"
                )


def make_family(name: str, params: dict | None = None) -> FamilyInstance:
    """Build a named family instance; oracles are self-checked on 5 points."""
    if name not in _BUILDERS:
        raise ParamError(
            f"unknown family {name!r}; choose from {sorted(_BUILDERS)}"
        )
    text, norm_params, oracles = _BUILDERS[name](dict(params or {}))
    inst = FamilyInstance(
        name=name,
        params=norm_params,
        utility=parse_utility(text),
        text=text,
        oracles=oracles,
    )
    _self_check(inst)
    return inst


def parse_family_spec(spec: str) -> FamilyInstance:
    """Parse the CLI form 'name:k=v,k=v' into a family instance."""
    name, _, rest = spec.partition(":")
    params: dict = {}
    if rest:
        for item in rest.split(","):
            key, _, val = item.partition("=")
            if not key or not val:
                raise ParamError(f"malformed family parameter {item!r}")
            params[key.strip()] = float(val)
    return make_family(name.strip(), params)
