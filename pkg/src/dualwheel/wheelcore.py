"""The duality wheel: typed nodes, typed edges, evaluable function handles,
every transition between the wheel functions, and a derivation-path planner.

Ten nodes: the preference quartet (DUF, IUF, EF, DF), the demand quartet
(MDF, HDF, HIDF, AIDF), plus BC and EAF. Four relationship kinds: dual,
inverse, counterpart, derivative. A WheelSession owns one parsed utility
and lazily derives every other function from it, caching handles per
(node, method) so the same node can be reached along several routes and
the routes compared.
"""

from __future__ import annotations

import math
import threading
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from . import numkit
from .errors import (
    AmbiguityError,
    BracketError,
    ConvergenceError,
    DomainError,
    MonotonicityError,
    NoPathError,
)
from .exprdsl import UtilityExpr, parse_utility
from .numkit import PriceIncome, brent_root, fd_step


@dataclass(frozen=True)
class Tolerances:
    """Per-session numeric settings."""

    fd_step: float = 1e-6
    root_tol: float = 1e-12
    inversion_residual: float = 1e-8
    derivative_identity: float = 1e-3
    substitution_identity: float = 1e-5
    dv_dm_floor: float = 1e-12
    interior_eps: float = 1e-6


@dataclass(frozen=True)
class WheelNode:
    id: str
    signature: str
    label: str


NODES: dict[str, WheelNode] = {
    n.id: n
    for n in [
        WheelNode("DUF", "(q) -> utility", "Direct utility function U(q)"),
        WheelNode("IUF", "(P, M) -> utility", "Indirect utility function V(P,M)"),
        WheelNode("EF", "(P, u) -> money", "Expenditure function E(P,u)"),
        WheelNode("DF", "(q, u) -> scalar", "Distance function D(q,u)"),
        WheelNode("MDF", "(P, M) -> q", "Marshallian demand x^M(P,M)"),
        WheelNode("HDF", "(P, u) -> q", "Hicksian demand x^c(P,u)"),
        WheelNode("HIDF", "(q) -> p", "Inverse demand phi(q), normalized prices"),
        WheelNode("AIDF", "(q, u) -> p", "Inverse compensated demand psi(q,u)"),
        WheelNode("BC", "(P, M, q) -> slack", "Budget constraint M - P.q"),
        WheelNode("EAF", "(P, q) -> money", "Expenditure amount P.q"),
    ]
}

# argument roles each node's handle consumes, in order
SIGNATURE_ARGS: dict[str, tuple[str, ...]] = {
    "DUF": ("q",),
    "IUF": ("P", "M"),
    "EF": ("P", "u"),
    "DF": ("q", "u"),
    "MDF": ("P", "M"),
    "HDF": ("P", "u"),
    "HIDF": ("q",),
    "AIDF": ("q", "u"),
    "BC": ("P", "M", "q"),
    "EAF": ("P", "q"),
}
NORMALIZED_ARGS = {"MDF": ("p",), "HDF": ("p", "u")}


@dataclass(frozen=True)
class WheelEdge:
    src: str
    dst: str
    kind: str  # dual | inverse | counterpart | derivative
    method: str | None
    bidirectional: bool
    label: str = ""
    formula: str = ""


EDGES: tuple[WheelEdge, ...] = (
    # dual pairs (checked as identities, not executed as transitions)
    WheelEdge("DUF", "IUF", "dual", "dual_pair_duf_iuf", True,
              "Dual pair", "U(q) = min{ V(p) : p.q >= 1 }"),
    WheelEdge("DF", "EF", "dual", "dual_pair_df_ef", True,
              "Dual pair", "D(q,u) = max{ p.q : E(p,u) = 1 }"),
    # inverse pairs
    WheelEdge("DUF", "DF", "inverse", "t_duf_to_df", True,
              "Ray inversion", "U(q / D(q,u)) = u"),
    WheelEdge("DF", "DUF", "inverse", "t_df_to_duf", True,
              "Ray inversion", "D(q, U(q)) = 1"),
    WheelEdge("IUF", "EF", "inverse", "t_iuf_to_ef", True,
              "Income inversion", "V(P, E(P,u)) = u"),
    WheelEdge("EF", "IUF", "inverse", "t_ef_to_iuf", True,
              "Utility inversion", "E(P, V(P,M)) = M"),
    WheelEdge("HIDF", "MDF", "inverse", "t_hidf_to_mdf", True,
              "System inversion, denormalized", "solve phi(q) = P/M for q"),
    WheelEdge("AIDF", "HDF", "inverse", "t_aidf_to_hdf", True,
              "System inversion, denormalized", "solve psi(q,u) = P/E(P,u) for q"),
    # counterpart pairs
    WheelEdge("MDF", "HDF", "counterpart", "slutsky", True,
              "Slutsky Equation",
              "dx_i^M/dP_j = dx_i^c/dP_j - (dx_i^M/dM) x_j"),
    WheelEdge("HIDF", "AIDF", "counterpart", None, True,
              "Optimal prices under primal vs dual", ""),
    WheelEdge("BC", "EAF", "counterpart", "t_bc_to_eaf", True,
              "Constraint vs objective counterpart", "E(P,q) = P.q"),
    # derivative edges
    WheelEdge("DUF", "MDF", "derivative", "t_primal_solve", False,
              "Primal solve", "x^M(P,M) = argmax{ U(q) : P.q <= M }"),
    WheelEdge("DUF", "HIDF", "derivative", "t_hotelling_wold", False,
              "Hotelling-Wold Identity",
              "phi_i(q) = (dU/dq_i) / sum_j (dU/dq_j) q_j"),
    WheelEdge("DUF", "BC", "derivative", "t_budget_constraint", False,
              "Attach budget constraint", "BC(P,M,q) = M - P.q"),
    WheelEdge("MDF", "IUF", "derivative", "t_mdf_to_iuf", False,
              "Substitution into DUF", "V(P,M) = U(x^M(P,M))"),
    WheelEdge("IUF", "MDF", "derivative", "t_roy", False,
              "Roy's Identity", "x_i^M = -(dV/dP_i)/(dV/dM)"),
    WheelEdge("IUF", "MDF", "derivative", "t_norm_roy", False,
              "Normalized Roy's Identity",
              "x_i^M(p) = V_i(p) / sum_j p_j V_j(p)"),
    WheelEdge("DF", "HDF", "derivative", "t_dual_solve", False,
              "Dual solve", "x^c(P,u) = argmin{ P.q : U(q) >= u }"),
    WheelEdge("DF", "AIDF", "derivative", "t_antonelli", False,
              "Antonelli Equation", "psi_i(q,u) = dD(q,u)/dq_i"),
    WheelEdge("HDF", "EF", "derivative", "t_hdf_to_ef", False,
              "Substitution into EAF", "E(P,u) = P.x^c(P,u)"),
    WheelEdge("EF", "HDF", "derivative", "t_shephard", False,
              "Shephard's Lemma", "x_i^c = dE(P,u)/dP_i"),
    WheelEdge("EF", "HDF", "derivative", "t_norm_shephard", False,
              "Normalized Shephard's Lemma", "x_i^c = dE(p,u)/dp_i"),
    WheelEdge("MDF", "DUF", "derivative", "t_mdf_to_duf", False,
              "Inverse demand substituted into IUF", "U(q) = V(p(q))"),
    WheelEdge("HDF", "EAF", "derivative", "t_hdf_to_eaf", False,
              "Inverse demand substituted into EF", "E(P,q) = E(P(x^c), u)"),
    WheelEdge("IUF", "MDF", "derivative", "t_iuf_to_mdf_via_hdf", False,
              "Cross-substitution", "x^M = x^c(P, V(P,M))"),
    WheelEdge("EF", "HDF", "derivative", "t_ef_to_hdf_via_mdf", False,
              "Cross-substitution", "x^c = x^M(P, E(P,u))"),
)

_EDGE_BY_METHOD = {e.method: e for e in EDGES if e.method}


@dataclass(frozen=True)
class FunctionHandle:
    """An evaluable wheel function plus the derivation path that made it."""

    node: str
    method: str
    evaluate: Callable
    provenance: tuple[str, ...]
    variant: str = "standard"

    @property
    def signature(self) -> tuple[str, ...]:
        if self.variant == "normalized":
            return NORMALIZED_ARGS[self.node]
        return SIGNATURE_ARGS[self.node]

    def __call__(self, *args):
        return self.evaluate(*args)


# ---------------------------------------------------------------------------
# Session
# ---------------------------------------------------------------------------


class WheelSession:
    """Single-utility workspace.

    Transitions mutate the handle cache under a lock; cached handles are
    immutable and safe to evaluate concurrently. `latest` tracks the most
    recently produced handle per node so that loop executions consume their
    own legs rather than canonical shortcuts.
    """

    def __init__(self, utility: UtilityExpr | str, settings: Tolerances | None = None):
        if isinstance(utility, str):
            utility = parse_utility(utility)
        self.utility = utility
        self.settings = settings or Tolerances()
        self.cache: dict[tuple[str, str], FunctionHandle] = {}
        self.latest: dict[str, FunctionHandle] = {}
        self._canonical: dict[str, FunctionHandle] = {}
        self._lock = threading.RLock()
        seed = FunctionHandle("DUF", "seed", lambda q: utility.value(q), ())
        self._store(seed)
        self._canonical["DUF"] = seed

    # -- cache plumbing ------------------------------------------------------
    #
    # Handles bind every input handle at build time, never at evaluation
    # time, so the handle graph is a DAG by construction (a handle can only
    # reference handles that already existed). Rewiring means rebuilding in
    # a fresh session.

    def _store(self, handle: FunctionHandle) -> FunctionHandle:
        with self._lock:
            self.cache[(handle.node, handle.method)] = handle
            self.latest[handle.node] = handle
        return handle

    def canonical_handle(self, node: str) -> FunctionHandle:
        """Handle derived along the planner's shortest chain from DUF, with
        canonical inputs all the way down. Independent of session history."""
        if node not in NODES:
            raise NoPathError(f"unknown wheel node {node!r}")
        with self._lock:
            cached = self._canonical.get(node)
        if cached is not None:
            return cached
        for edge in plan_path("DUF", node):
            with self._lock:
                if edge.dst in self._canonical:
                    continue
                src_handle = self._canonical[edge.src]
            builder = _TRANSITIONS[edge.method][2]
            handle = builder(self, src_handle)
            with self._lock:
                self._canonical[edge.dst] = handle
                self.cache.setdefault((handle.node, handle.method), handle)
                self.latest.setdefault(handle.node, handle)
        return self._canonical[node]

    def node_handle(self, node: str) -> FunctionHandle:
        """Latest handle for the node, deriving it canonically if absent."""
        if node not in NODES:
            raise NoPathError(f"unknown wheel node {node!r}")
        with self._lock:
            if node in self.latest:
                return self.latest[node]
        handle = self.canonical_handle(node)
        with self._lock:
            self.latest.setdefault(node, handle)
        return handle

    def run_transition(self, method: str) -> FunctionHandle:
        """Execute one named transition, reusing the cached result if any."""
        if method not in _TRANSITIONS:
            raise NoPathError(f"unknown transition {method!r}")
        src, dst, builder = _TRANSITIONS[method]
        with self._lock:
            cached = self.cache.get((dst, method))
        if cached is not None:
            self.latest[dst] = cached
            return cached
        src_handle = self.node_handle(src)
        handle = builder(self, src_handle)
        return self._store(handle)

    # -- conveniences used throughout verify/shell ---------------------------

    def value_of(self, node: str, *args):
        return self.node_handle(node)(*args)


# ---------------------------------------------------------------------------
# Transition builders
# ---------------------------------------------------------------------------


def _prov(src: FunctionHandle, method: str) -> tuple[str, ...]:
    return src.provenance + (method,)


def _as_vec(x) -> np.ndarray:
    return np.asarray(x, dtype=float)


def _t_primal_solve(session, src):
    U = session.utility

    def evaluate(P, M):
        return numkit.maximize_on_budget(U, PriceIncome(P, M)).bundle

    return FunctionHandle("MDF", "t_primal_solve", evaluate, _prov(src, "t_primal_solve"))


def _t_budget_constraint(session, src):
    def evaluate(P, M, q):
        return float(M) - float(_as_vec(P) @ _as_vec(q))

    return FunctionHandle("BC", "t_budget_constraint", evaluate,
                          _prov(src, "t_budget_constraint"))


def _t_bc_to_eaf(session, src):
    def evaluate(P, q):
        return float(_as_vec(P) @ _as_vec(q))

    return FunctionHandle("EAF", "t_bc_to_eaf", evaluate, _prov(src, "t_bc_to_eaf"))


def _t_eaf_to_bc(session, src):
    def evaluate(P, M, q):
        return float(M) - float(_as_vec(P) @ _as_vec(q))

    return FunctionHandle("BC", "t_eaf_to_bc", evaluate, _prov(src, "t_eaf_to_bc"))


def _t_mdf_to_iuf(session, src):
    U = session.utility
    mdf = src

    def evaluate(P, M):
        q = np.maximum(mdf(P, M), 0.0)
        v = U.eval_many(q[None, :])[0]
        if not np.isfinite(v):
            raise DomainError("utility undefined at the demanded bundle")
        return float(v)

    return FunctionHandle("IUF", "t_mdf_to_iuf", evaluate, _prov(src, "t_mdf_to_iuf"))


def _t_roy(session, src):
    iuf = src
    floor = session.settings.dv_dm_floor

    def evaluate(P, M):
        P = _as_vec(P)
        M = float(M)
        hM = fd_step(M)
        dV_dM = (iuf(P, M + hM) - iuf(P, M - hM)) / (2.0 * hM)
        if abs(dV_dM) < floor:
            raise DomainError("dV/dM vanishes, indirect utility is degenerate here")
        x = np.empty(P.size)
        for i in range(P.size):
            h = min(fd_step(P[i]), 0.4 * P[i])
            Pp, Pm = P.copy(), P.copy()
            Pp[i] += h
            Pm[i] -= h
            x[i] = -(iuf(Pp, M) - iuf(Pm, M)) / (2.0 * h) / dV_dM
        return x

    return FunctionHandle("MDF", "t_roy", evaluate, _prov(src, "t_roy"))


def _t_norm_roy(session, src):
    iuf = src

    def evaluate(p):
        p = _as_vec(p)
        grad = np.empty(p.size)
        for i in range(p.size):
            h = min(fd_step(p[i]), 0.4 * p[i])
            pp, pm = p.copy(), p.copy()
            pp[i] += h
            pm[i] -= h
            grad[i] = (iuf(pp, 1.0) - iuf(pm, 1.0)) / (2.0 * h)
        denom = float(p @ grad)
        if abs(denom) < session.settings.dv_dm_floor:
            raise DomainError("normalized indirect utility is degenerate here")
        return grad / denom

    return FunctionHandle("MDF", "t_norm_roy", evaluate, _prov(src, "t_norm_roy"),
                          variant="normalized")


def _t_iuf_to_ef(session, src):
    iuf = src
    tol = session.settings.root_tol

    def evaluate(P, u):
        P = _as_vec(P)
        u = float(u)

        def g(m):
            return iuf(P, m) - u

        lo, hi = None, 1.0
        g_hi = g(hi)
        if g_hi < 0.0:
            for _ in range(60):
                lo, hi = hi, hi * 2.0
                g_hi = g(hi)
                if g_hi >= 0.0:
                    break
                if hi > 1e12:
                    raise BracketError("no income level attains the target utility")
            else:
                raise BracketError("no income level attains the target utility")
        else:
            m = hi
            for _ in range(60):
                cand = m * 0.5
                if g(cand) < 0.0:
                    lo, hi = cand, m
                    break
                m = cand
            else:
                return m  # E below 1e-18, effectively free
        return brent_root(g, lo, hi, tol=tol * max(1.0, hi))

    return FunctionHandle("EF", "t_iuf_to_ef", evaluate, _prov(src, "t_iuf_to_ef"))


def _t_ef_to_iuf(session, src):
    ef = src
    tol = session.settings.root_tol
    warm: dict[tuple, float] = {}  # price vector -> last utility root
    warm_lock = threading.Lock()

    def evaluate(P, M):
        P = _as_vec(P)
        M = float(M)

        def g(v):
            try:
                return ef(P, v) - M
            except (BracketError, ConvergenceError, DomainError):
                return math.nan

        key = tuple(np.round(P, 9))
        with warm_lock:
            hint = warm.get(key)
        lo = hi = None
        if hint is not None:
            # a nearby root was found before: try a tight window first
            width = 1e-3 * max(1.0, abs(hint))
            a, b = hint - width, hint + width
            ga, gb = g(a), g(b)
            if np.isfinite(ga) and np.isfinite(gb) and ga < 0.0 <= gb:
                lo, hi = a, b
        if lo is None:
            # E is increasing in u. Probe upward geometrically from 1; probe
            # downward geometrically toward 0 first (families with positive
            # utility ranges live there), then walk the negative axis.
            down = [1.0] + [2.0 ** -k for k in range(1, 40)] + \
                   [-(2.0 ** k) for k in range(-3, 40)]
            up = [2.0 ** k for k in range(0, 44)]
            for v in down:
                gv = g(v)
                if np.isfinite(gv) and gv < 0.0:
                    lo = v
                    break
                if np.isfinite(gv) and gv == 0.0:
                    return v
            for v in up:
                gv = g(v)
                if np.isfinite(gv) and gv >= 0.0:
                    hi = v
                    break
            if lo is None or hi is None or not lo < hi:
                raise BracketError(
                    "could not bracket the utility level matching income"
                )
        root = brent_root(g, lo, hi, tol=tol * max(1.0, abs(hi), abs(lo)))
        with warm_lock:
            warm[key] = root
            if len(warm) > 4096:
                warm.clear()
        return root

    return FunctionHandle("IUF", "t_ef_to_iuf", evaluate, _prov(src, "t_ef_to_iuf"))


def _t_dual_solve(session, src):
    U = session.utility

    def evaluate(P, u):
        return numkit.minimize_expenditure(U, _as_vec(P), float(u)).bundle

    return FunctionHandle("HDF", "t_dual_solve", evaluate, _prov(src, "t_dual_solve"))


def _t_hdf_to_ef(session, src):
    hdf = src

    def evaluate(P, u):
        P = _as_vec(P)
        return float(P @ hdf(P, u))

    return FunctionHandle("EF", "t_hdf_to_ef", evaluate, _prov(src, "t_hdf_to_ef"))


def _t_shephard(session, src):
    ef = src

    def evaluate(P, u):
        P = _as_vec(P)
        x = np.empty(P.size)
        for i in range(P.size):
            h = min(fd_step(P[i]), 0.4 * P[i])
            if P[i] - h <= 0:
                raise DomainError("price too close to the boundary to differentiate")
            Pp, Pm = P.copy(), P.copy()
            Pp[i] += h
            Pm[i] -= h
            x[i] = (ef(Pp, u) - ef(Pm, u)) / (2.0 * h)
        return x

    return FunctionHandle("HDF", "t_shephard", evaluate, _prov(src, "t_shephard"))


def _t_norm_shephard(session, src):
    ef = src

    def evaluate(p, u):
        p = _as_vec(p)
        x = np.empty(p.size)
        for i in range(p.size):
            h = min(fd_step(p[i]), 0.4 * p[i])
            pp, pm = p.copy(), p.copy()
            pp[i] += h
            pm[i] -= h
            x[i] = (ef(pp, u) - ef(pm, u)) / (2.0 * h)
        return x

    return FunctionHandle("HDF", "t_norm_shephard", evaluate,
                          _prov(src, "t_norm_shephard"), variant="normalized")


def _t_hotelling_wold(session, src):
    U = session.utility

    def evaluate(q):
        q = _as_vec(q)
        grad = U.gradient(q)
        denom = float(grad @ q)
        if not np.isfinite(denom) or abs(denom) < 1e-12:
            raise DomainError("normalization denominator vanishes (satiation)")
        return grad / denom

    return FunctionHandle("HIDF", "t_hotelling_wold", evaluate,
                          _prov(src, "t_hotelling_wold"))


# -- multi-dimensional inversions -------------------------------------------


def _least_squares_quiet(*args, **kwargs):
    """scipy trf emits RuntimeWarnings when a residual cliff (the 1e6
    out-of-domain sentinel) enters its trust-region arithmetic; harmless."""
    with np.errstate(all="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return optimize.least_squares(*args, **kwargs)


def _cluster_representatives(points, scores, spacing, score_window):
    """Indices of one best point per spatial cluster among near-optimal
    lattice points. Used for ambiguity detection in system inversions."""
    best = float(np.min(scores))
    cand = np.flatnonzero(scores <= best + score_window)
    order = cand[np.argsort(scores[cand], kind="stable")]
    reps: list[int] = []
    for idx in order:
        if all(
            np.max(np.abs(points[idx] - points[r])) > 2.5 * spacing for r in reps
        ):
            reps.append(int(idx))
    return reps


def _t_hidf_to_mdf(session, src):
    hidf = src
    U = session.utility
    tol = session.settings.inversion_residual

    def evaluate(P, M):
        P = _as_vec(P)
        M = float(M)
        p = P / M
        n = p.size
        scale = 1.0 / p  # q on the face p.q = 1

        # lattice over the face (phi(q).q = 1 forces solutions onto it)
        W = numkit.simplex_lattice(n, 65)
        inner = np.all(W > 1e-9, axis=1)
        Q = W[inner] * scale
        grads = U.gradient_many(Q)
        denoms = np.einsum("ij,ij->i", grads, Q)
        with np.errstate(all="ignore"):
            phi = grads / denoms[:, None]
        resid = np.linalg.norm(phi - p, axis=1) / np.linalg.norm(p)
        resid[~np.isfinite(resid)] = np.inf

        def residual_fn(q):
            try:
                return (hidf(q) - p) / np.linalg.norm(p)
            except DomainError:
                return np.full(n, 1e6)

        reps = _cluster_representatives(
            W[inner], resid, 1.0 / 64, max(4.0 * float(np.min(resid)), 1e-6)
        )
        roots = []
        for r in reps[:4]:
            sol = _least_squares_quiet(
                residual_fn,
                Q[r],
                bounds=(1e-12, np.inf),
                xtol=1e-15,
                ftol=1e-15,
                gtol=None,
                max_nfev=200,
            )
            rnorm = float(np.linalg.norm(sol.fun))
            if rnorm <= tol:
                if not any(
                    np.linalg.norm(sol.x - q0) <= 1e-6 * (1.0 + np.linalg.norm(q0))
                    for q0, _ in roots
                ):
                    roots.append((sol.x, rnorm))
        if len(roots) >= 2:
            raise AmbiguityError(
                "inverse demand has multiple residual-equal roots "
                "(multi-valued demand, non-convex regime)",
                roots=[q for q, _ in roots],
            )
        if not roots:
            raise ConvergenceError("could not invert the inverse-demand system")
        return roots[0][0]

    return FunctionHandle("MDF", "t_hidf_to_mdf", evaluate, _prov(src, "t_hidf_to_mdf"))


def _t_antonelli(session, src):
    df = src

    def evaluate(q, u):
        q = _as_vec(q)
        u = float(u)
        psi = np.empty(q.size)
        for i in range(q.size):
            h = min(fd_step(q[i]), 0.4 * max(q[i], 1e-9))
            qp, qm = q.copy(), q.copy()
            qp[i] += h
            qm[i] -= h
            psi[i] = (df(qp, u) - df(qm, u)) / (2.0 * h)
        return psi

    return FunctionHandle("AIDF", "t_antonelli", evaluate, _prov(src, "t_antonelli"))


def _t_aidf_to_hdf(session, src):
    aidf = src
    U = session.utility
    # psi comes from finite differences of a root-found DF, so the residual
    # floor sits near 1e-7; do not demand the symbolic-grade 1e-8 here
    tol = max(session.settings.inversion_residual, 1e-6)
    warm: dict[tuple, np.ndarray] = {}  # price direction -> last root
    warm_lock = threading.Lock()

    def evaluate(P, u):
        P = _as_vec(P)
        u = float(u)
        n = P.size
        pnorm = float(np.linalg.norm(P))

        # free-bundle shortcut, mirrors the dual solver's origin case
        origin_val = U.eval_many(np.full((1, n), 1e-12))[0]
        if np.isfinite(origin_val) and origin_val >= u:
            return np.zeros(n)

        def residual_fn(q):
            try:
                r = (aidf(q, u) * float(P @ q) - P) / pnorm
            except DomainError:
                return np.full(n, 1e6)
            return np.where(np.isfinite(r), r, 1e6)

        def polish(q0):
            sol = _least_squares_quiet(
                residual_fn,
                np.maximum(q0, 1e-9),
                bounds=(1e-12, np.inf),
                xtol=1e-12,
                ftol=1e-12,
                gtol=None,
                max_nfev=80,
            )
            return sol.x, float(np.linalg.norm(sol.fun))

        # warm fast path: a previous root at the same price direction is a
        # strong seed for a nearby u (FD stencils hammer this); the cold
        # path below retains the full lattice scan with ambiguity detection
        key = tuple(np.round(P / pnorm, 9))
        with warm_lock:
            seed = warm.get(key)
        if seed is not None and np.all(seed > 0):
            q0 = seed
            try:
                u_seed = U.value(seed)
                if u_seed > 0 and u > 0:
                    q0 = seed * (u / u_seed)  # ray rescale toward the new locus
            except DomainError:
                pass
            q_try, rnorm = polish(q0)
            if rnorm <= tol and np.all(q_try > 0) and np.linalg.norm(
                q_try - q0
            ) <= 0.5 * (1.0 + np.linalg.norm(q0)):
                with warm_lock:
                    warm[key] = q_try
                return q_try

        # seed: indifference-locus scan; tangency roots are stationary
        # points of cost on the locus, so cost minima mark the basins
        dirs = numkit.simplex_lattice(n, 33)
        s = 1.0
        while True:
            v = U.eval_many(np.full((1, n), s))[0]
            if np.isfinite(v) and v >= u + 0.01 * max(1.0, abs(u)):
                break
            s *= 4.0
            if s > 1e6:
                raise ConvergenceError("target utility unattainable on search box")
        radii = numkit._radii_batch(U, dirs, u, s, iters=40)
        costs = radii * (dirs @ P)
        costs[~np.isfinite(costs)] = np.inf
        if not np.any(np.isfinite(costs)):
            raise ConvergenceError("no indifference-locus point found for inversion")

        cmin = float(np.min(costs))
        reps = _cluster_representatives(
            dirs, costs, 1.0 / 32, 1e-6 * max(1.0, cmin)
        )
        roots = []
        for r in reps[:4]:
            q0 = dirs[r] * radii[r]
            if not np.all(np.isfinite(q0)):
                continue
            sol_x, rnorm = polish(q0)
            # reject roots that left the optimal basin (cost rose):
            # tangency stationarity also holds at interior cost maxima
            if rnorm <= tol and float(P @ sol_x) <= cmin * (1.0 + 1e-4):
                if not any(
                    np.linalg.norm(sol_x - q0_) <= 1e-6 * (1.0 + np.linalg.norm(q0_))
                    for q0_, _ in roots
                ):
                    roots.append((sol_x, rnorm))
        if len(roots) >= 2:
            raise AmbiguityError(
                "inverse compensated demand has multiple residual-equal roots",
                roots=[q for q, _ in roots],
            )
        if not roots:
            raise ConvergenceError(
                "could not invert the compensated inverse-demand system"
            )
        with warm_lock:
            warm[key] = roots[0][0]
            if len(warm) > 4096:
                warm.clear()
        return roots[0][0]

    return FunctionHandle("HDF", "t_aidf_to_hdf", evaluate, _prov(src, "t_aidf_to_hdf"))


# -- ray inversions (DUF <-> DF) ---------------------------------------------


def _t_duf_to_df(session, src):
    U = session.utility
    tol = session.settings.root_tol

    def evaluate(q, u):
        q = _as_vec(q)
        u = float(u)
        vals = []
        for lam in (0.5, 1.0, 2.0):
            v = U.eval_many((q / lam)[None, :])[0]
            vals.append(v if np.isfinite(v) else -np.inf)
        if not (vals[0] > vals[1] > vals[2]):
            raise MonotonicityError(
                "utility is not strictly increasing along the ray through q"
            )

        def g(lam):
            v = U.eval_many((q / lam)[None, :])[0]
            return (v - u) if np.isfinite(v) else -1e30

        lo, hi = None, 1.0
        g1 = g(1.0)
        if g1 == 0.0:
            return 1.0
        if g1 > 0.0:  # need larger lambda to bring utility down to u
            lam = 1.0
            for _ in range(80):
                lo, lam = lam, lam * 2.0
                if g(lam) <= 0.0:
                    hi = lam
                    break
                if lam > 1e9:
                    raise BracketError("deflation never reaches the target utility")
            else:
                raise BracketError("deflation never reaches the target utility")
            lo, hi = lo, lam
        else:
            lam = 1.0
            for _ in range(80):
                hi, lam = lam, lam * 0.5
                if g(lam) >= 0.0:
                    lo = lam
                    break
                if lam < 1e-9:
                    raise BracketError("the ray never attains the target utility")
            else:
                raise BracketError("the ray never attains the target utility")
            lo, hi = lam, hi
        return brent_root(g, lo, hi, tol=tol * max(1.0, hi))

    return FunctionHandle("DF", "t_duf_to_df", evaluate, _prov(src, "t_duf_to_df"))


def _t_df_to_duf(session, src):
    df = src
    U = session.utility
    tol = session.settings.root_tol

    def evaluate(q):
        q = _as_vec(q)
        # recovered utility: the u solving D(q, u) = 1 (D decreasing in u);
        # the session utility only supplies the bracketing seed
        v0 = U.eval_many(q[None, :])[0]
        if not np.isfinite(v0):
            raise DomainError("cannot seed the inversion outside the domain")

        def g(v):
            try:
                return df(q, v) - 1.0
            except (BracketError, MonotonicityError):
                return math.nan

        width = 1e-3 * max(1.0, abs(v0))
        lo, hi = v0 - width, v0 + width
        g_lo, g_hi = g(lo), g(hi)
        for _ in range(60):
            if np.isfinite(g_lo) and g_lo > 0.0 and np.isfinite(g_hi) and g_hi <= 0.0:
                break
            width *= 2.0
            if not np.isfinite(g_lo) or g_lo <= 0.0:
                lo = v0 - width
                g_lo = g(lo)
            if not np.isfinite(g_hi) or g_hi > 0.0:
                hi = v0 + width
                g_hi = g(hi)
        else:
            raise BracketError("could not bracket the recovered utility level")
        return brent_root(g, lo, hi, tol=tol * max(1.0, abs(v0)))

    return FunctionHandle("DUF", "t_df_to_duf", evaluate, _prov(src, "t_df_to_duf"))


# -- loop-closing substitutions ----------------------------------------------


def _t_mdf_to_duf(session, src):
    mdf = src
    # the MDF being inverted may itself be finite-difference layered
    # (Roy route in loops), whose demand values carry noise up to ~4e-5;
    # still four orders below the hull mismatch the non-convex demo flags
    tol = max(session.settings.inversion_residual, 1e-4)
    # bound now so a loop's own IUF (the latest one) is consumed, and the
    # handle graph stays acyclic
    iuf = session.node_handle("IUF")
    seed_hidf = session.canonical_handle("HIDF")

    def evaluate(q):
        q = _as_vec(q)
        qnorm = float(np.linalg.norm(q))

        def residual_fn(p):
            try:
                return (np.maximum(mdf(np.maximum(p, 1e-12), 1.0), 0.0) - q) / max(
                    1.0, qnorm
                )
            except (DomainError, ConvergenceError):
                return np.full(q.size, 1e6)

        # seed from the closed-form inverse demand: for invertible demand
        # phi(q) IS the normalized price point, so verify it against the
        # actual demand handle and accept on the spot; polish when it only
        # lands nearby; the lattice (with ambiguity detection) runs when
        # the seeded attempts fail outright
        p0 = np.maximum(seed_hidf(np.maximum(q, 1e-9)), 1e-9)
        r0 = float(np.linalg.norm(residual_fn(p0)))
        if r0 <= tol:
            return float(iuf(p0, 1.0))
        sol = _least_squares_quiet(
            residual_fn, p0, bounds=(1e-12, np.inf),
            xtol=1e-12, ftol=1e-12, gtol=None, max_nfev=60,
        )
        if float(np.linalg.norm(sol.fun)) <= tol:
            return float(iuf(sol.x, 1.0))

        W = numkit.simplex_lattice(q.size, 33)
        inner = np.all(W > 1e-9, axis=1)
        Pgrid = W[inner] / np.maximum(q, 1e-6)  # face p.q ~= 1, zeros guarded
        resid = np.array([float(np.linalg.norm(residual_fn(p))) for p in Pgrid])
        reps = _cluster_representatives(
            W[inner], resid, 1.0 / 32, max(4.0 * float(np.min(resid)), 1e-6)
        )
        roots = []
        for r in reps[:3]:
            s2 = _least_squares_quiet(
                residual_fn, Pgrid[r], bounds=(1e-12, np.inf),
                xtol=1e-12, ftol=1e-12, gtol=None, max_nfev=60,
            )
            roots.append((s2.x, float(np.linalg.norm(s2.fun))))
        good = [p for p, rn in roots if rn <= tol]
        if len(good) >= 2:
            raise AmbiguityError(
                "normalized demand could not be uniquely inverted", roots=good
            )
        if len(good) == 1:
            return float(iuf(good[0], 1.0))
        best = min(roots, key=lambda t: t[1])
        raise AmbiguityError(
            "normalized demand is not invertible at this bundle "
            f"(best residual {best[1]:.3g}); demand image misses the bundle",
            roots=[p for p, _ in roots],
        )

    return FunctionHandle("DUF", "t_mdf_to_duf", evaluate, _prov(src, "t_mdf_to_duf"))


def _t_hdf_to_eaf(session, src):
    hdf = src
    U = session.utility

    def evaluate(P, q):
        P = _as_vec(P)
        q = _as_vec(q)
        direct = float(P @ q)  # EAF(P,q) = P.q by definition off-image
        try:
            u_seed = U.value(np.maximum(q, 1e-12))
        except DomainError:
            return direct
        try:
            xc = hdf(P, u_seed)
        except (ConvergenceError, AmbiguityError, BracketError):
            return direct
        if np.linalg.norm(xc - q) <= 1e-6 * (1.0 + np.linalg.norm(q)):
            return float(P @ xc)  # on the demand image: recovered = P.q
        return direct

    return FunctionHandle("EAF", "t_hdf_to_eaf", evaluate, _prov(src, "t_hdf_to_eaf"))


def _t_iuf_to_mdf_via_hdf(session, src):
    iuf = src
    hdf = session.canonical_handle("HDF")  # "its corresponding system of HDFs"

    def evaluate(P, M):
        return hdf(P, iuf(P, M))

    return FunctionHandle("MDF", "t_iuf_to_mdf_via_hdf", evaluate,
                          _prov(src, "t_iuf_to_mdf_via_hdf"))


def _t_ef_to_hdf_via_mdf(session, src):
    ef = src
    mdf = session.canonical_handle("MDF")  # "its corresponding system of MDFs"

    def evaluate(P, u):
        return mdf(P, ef(P, u))

    return FunctionHandle("HDF", "t_ef_to_hdf_via_mdf", evaluate,
                          _prov(src, "t_ef_to_hdf_via_mdf"))


_TRANSITIONS: dict[str, tuple[str, str, Callable]] = {
    "t_primal_solve": ("DUF", "MDF", _t_primal_solve),
    "t_budget_constraint": ("DUF", "BC", _t_budget_constraint),
    "t_bc_to_eaf": ("BC", "EAF", _t_bc_to_eaf),
    "t_eaf_to_bc": ("EAF", "BC", _t_eaf_to_bc),
    "t_mdf_to_iuf": ("MDF", "IUF", _t_mdf_to_iuf),
    "t_roy": ("IUF", "MDF", _t_roy),
    "t_norm_roy": ("IUF", "MDF", _t_norm_roy),
    "t_iuf_to_ef": ("IUF", "EF", _t_iuf_to_ef),
    "t_ef_to_iuf": ("EF", "IUF", _t_ef_to_iuf),
    "t_dual_solve": ("DF", "HDF", _t_dual_solve),
    "t_hdf_to_ef": ("HDF", "EF", _t_hdf_to_ef),
    "t_shephard": ("EF", "HDF", _t_shephard),
    "t_norm_shephard": ("EF", "HDF", _t_norm_shephard),
    "t_hotelling_wold": ("DUF", "HIDF", _t_hotelling_wold),
    "t_hidf_to_mdf": ("HIDF", "MDF", _t_hidf_to_mdf),
    "t_antonelli": ("DF", "AIDF", _t_antonelli),
    "t_aidf_to_hdf": ("AIDF", "HDF", _t_aidf_to_hdf),
    "t_duf_to_df": ("DUF", "DF", _t_duf_to_df),
    "t_df_to_duf": ("DF", "DUF", _t_df_to_duf),
    "t_mdf_to_duf": ("MDF", "DUF", _t_mdf_to_duf),
    "t_hdf_to_eaf": ("HDF", "EAF", _t_hdf_to_eaf),
    "t_iuf_to_mdf_via_hdf": ("IUF", "MDF", _t_iuf_to_mdf_via_hdf),
    "t_ef_to_hdf_via_mdf": ("EF", "HDF", _t_ef_to_hdf_via_mdf),
}

TRANSITION_NAMES = tuple(sorted(_TRANSITIONS))


# ---------------------------------------------------------------------------
# Planner
# ---------------------------------------------------------------------------


def plan_path(src: str, dst: str) -> list[WheelEdge]:
    """Shortest transition chain from src to dst by edge count (BFS), with
    deterministic lexical tie-break on transition names. Raises NoPathError
    when dst is unreachable along implemented directions."""
    for node in (src, dst):
        if node not in NODES:
            raise NoPathError(f"unknown wheel node {node!r}")
    if src == dst:
        return []
    adjacency: dict[str, list[tuple[str, str]]] = {}
    for name in TRANSITION_NAMES:  # sorted: lexical tie-break
        a, b, _ = _TRANSITIONS[name]
        adjacency.setdefault(a, []).append((name, b))
    parent: dict[str, tuple[str, str]] = {}
    frontier = [src]
    seen = {src}
    while frontier:
        nxt = []
        for node in frontier:
            for name, target in adjacency.get(node, ()):
                if target in seen:
                    continue
                seen.add(target)
                parent[target] = (node, name)
                if target == dst:
                    path = []
                    cur = dst
                    while cur != src:
                        prev, method = parent[cur]
                        path.append(_edge_for(method))
                        cur = prev
                    path.reverse()
                    return path
                nxt.append(target)
        frontier = nxt
    raise NoPathError(f"no implemented transition chain from {src} to {dst}")


def _edge_for(method: str) -> WheelEdge:
    edge = _EDGE_BY_METHOD.get(method)
    if edge is not None:
        return edge
    src, dst, _ = _TRANSITIONS[method]
    return WheelEdge(src, dst, "derivative", method, False)


def _project_point(handle: FunctionHandle, point: dict):
    """Pull the handle's argument list out of a point dict, or None if the
    point lacks a required field."""
    args = []
    for role in handle.signature:
        if role not in point or point[role] is None:
            return None
        args.append(point[role])
    return args


def execute_path(session: WheelSession, path, eval_point: dict | None = None):
    """Run each transition in order; returns (final handle, trace).

    Each trace step records the transition, the produced node, and the
    handle's value at eval_point when the point carries the needed fields.
    A failing transition aborts with its error after recording the partial
    trace on the exception.
    """
    methods = [p.method if isinstance(p, WheelEdge) else str(p) for p in path]
    available = set(session.latest)
    for m in methods:
        if m not in _TRANSITIONS:
            raise NoPathError(f"unknown transition {m!r}")
        src, dst, _ = _TRANSITIONS[m]
        if src not in available:
            raise NoPathError(
                f"transition {m} needs node {src}, which is neither cached "
                "nor produced earlier in the path"
            )
        available.add(dst)
    trace = []
    handle = session.latest["DUF"] if not methods else None
    point = eval_point or {}
    for m in methods:
        try:
            handle = session.run_transition(m)
        except Exception as exc:
            exc.partial_trace = trace  # type: ignore[attr-defined]
            raise
        step = {"transition": m, "node": handle.node, "value": None}
        args = _project_point(handle, point)
        if args is not None:
            try:
                step["value"] = handle(*args)
            except Exception as exc:  # noqa: BLE001 - recorded, not fatal
                step["error"] = f"{type(exc).__name__}: {exc}"
        trace.append(step)
    if handle is None:
        handle = session.latest["DUF"]
    return handle, trace


# ---------------------------------------------------------------------------
# Dual-pair identity checks
# ---------------------------------------------------------------------------


def _face_optimize(values_fn, weights0, n, maximize=False):
    """Nelder-Mead over the weight simplex for the dual-pair recoveries."""
    sign = -1.0 if maximize else 1.0

    def objective(wfree):
        w_last = 1.0 - wfree.sum()
        if np.any(wfree <= 0.0) or w_last <= 0.0:
            worst = min(float(np.min(wfree, initial=1.0)), w_last)
            return 1e12 * (1.0 - worst)
        v = values_fn(np.append(wfree, w_last))
        return sign * v if np.isfinite(v) else 1e12

    nm = optimize.minimize(
        objective,
        weights0[:-1],
        method="Nelder-Mead",
        options={"xatol": 1e-6, "fatol": 1e-10, "maxiter": 250},
    )
    return sign * float(nm.fun)


def check_dual_pair_duf_iuf(session: WheelSession, q) -> float:
    """Relative residual of U(q) = min{ V(p) : p.q >= 1, p > 0 }.

    Monotonicity puts the minimum on the face p.q = 1, parameterized by
    weights w (p_i = w_i / q_i). Recovers the concavified utility under
    non-convex preferences, so the residual is the information-loss meter.
    """
    q = _as_vec(q)
    iuf = session.canonical_handle("IUF")
    n = q.size

    def value_at(w):
        p = w / q
        try:
            return float(iuf(p, 1.0))
        except (ConvergenceError, DomainError):
            return math.nan

    W = numkit.simplex_lattice(n, 21)
    W = W[np.all(W > 1e-6, axis=1)]
    vals = np.array([value_at(w) for w in W])
    vals[~np.isfinite(vals)] = np.inf
    w0 = W[int(np.argmin(vals))]
    best = min(float(np.min(vals)), _face_optimize(value_at, w0, n, maximize=False))
    u_true = session.utility.value(q)
    return abs(best - u_true) / max(1.0, abs(u_true))


def check_dual_pair_df_ef(session: WheelSession, q, u: float) -> float:
    """Relative residual of D(q,u) = min{ p.q : E(p,u) = 1 }.

    (The support-function dual of the expenditure function; a max over that
    set is unbounded because E is degree-one and vanishes along corner
    directions.) Degree-one homogeneity turns the equality constraint into
    a scale: for a direction d, p = d / E(d,u) satisfies it exactly, and
    the objective becomes (d.q) / E(d,u). Under non-convexity the recovered
    value is the concavified (hull) distance and the residual is large."""
    q = _as_vec(q)
    u = float(u)
    ef = session.canonical_handle("EF")
    df = session.canonical_handle("DF")
    n = q.size

    def value_at(d):
        try:
            e = float(ef(d, u))
        except (ConvergenceError, BracketError, DomainError):
            return math.nan
        if not np.isfinite(e) or e <= 1e-12:
            return math.nan
        return float(d @ q) / e

    W = numkit.simplex_lattice(n, 21)
    W = W[np.all(W > 1e-6, axis=1)]
    vals = np.array([value_at(w) for w in W])
    vals[~np.isfinite(vals)] = np.inf
    w0 = W[int(np.argmin(vals))]
    best = min(float(np.min(vals)), _face_optimize(value_at, w0, n, maximize=False))
    d_true = float(df(q, u))
    return abs(best - d_true) / max(1.0, abs(d_true))
