"""Identity-residual harness.

Each check samples seeded evaluation points, computes both sides of an
identity through independent derivation routes, and records relative
residuals (relative to max(1, |reference|), which keeps near-zero references
from blowing up the ratio). Points whose optima sit on the boundary are
excluded from derivative-based identities and counted separately; the
classical identities presume interior optima.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import wheelcore
from .errors import AmbiguityError, BracketError, ConvergenceError, DomainError
from .numkit import PriceIncome, fd_step
from .wheelcore import WheelSession

IDENTITY_NAMES = (
    "roy",
    "norm_roy",
    "shephard",
    "norm_shephard",
    "hotelling_wold",
    "antonelli",
    "iuf_ef_inverse",
    "mdf_hdf_cross_u",
    "mdf_hdf_cross_M",
    "duf_df_inverse",
    "dual_pair_duf_iuf",
    "dual_pair_df_ef",
    "slutsky",
)

# derivative-based identities compound two finite-difference layers
TOL_DERIVATIVE = 1e-3
# substitution / round-trip identities are solver-exact
TOL_SUBSTITUTION = 1e-5

_EXPENSIVE = {"dual_pair_duf_iuf", "dual_pair_df_ef"}
_EXPENSIVE_CAP = 8  # point cap for the optimization-backed dual-pair checks


@dataclass(frozen=True)
class ResidualEntry:
    identity: str
    point: dict
    lhs: object
    rhs: object
    residual: float
    passed: bool
    detail: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ResidualReport:
    entries: tuple[ResidualEntry, ...]
    tolerance: float
    seed: int
    sample_count: int
    excluded: int = 0

    @property
    def failures(self) -> tuple[ResidualEntry, ...]:
        return tuple(e for e in self.entries if not e.passed)

    @property
    def failed_identities(self) -> tuple[str, ...]:
        return tuple(sorted({e.identity for e in self.failures}))

    def merged_with(self, other: "ResidualReport") -> "ResidualReport":
        return ResidualReport(
            entries=self.entries + other.entries,
            tolerance=max(self.tolerance, other.tolerance),
            seed=self.seed,
            sample_count=self.sample_count + other.sample_count,
            excluded=self.excluded + other.excluded,
        )


@dataclass(frozen=True)
class GapReport:
    primal_value: float
    dual_value: float
    gap: float
    relative_gap: float


@dataclass(frozen=True)
class InfoLossReport:
    probes: tuple
    original_u_values: tuple
    recovered_u_values: tuple
    ranking_flips: tuple
    convexified: bool
    tolerance: float
    ambiguous_probes: tuple


def _rel(lhs, rhs) -> float:
    lhs = np.atleast_1d(np.asarray(lhs, dtype=float))
    rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
    denom = np.maximum(1.0, np.abs(rhs))
    return float(np.max(np.abs(lhs - rhs) / denom))


def _sample_points(session: WheelSession, samples: int, seed: int):
    """Seeded evaluation points: log-uniform prices and income, u taken as
    the attainable V(P, M) at the sampled point, q log-uniform."""
    rng = np.random.default_rng(seed)
    n = session.utility.n_goods
    pts = []
    for _ in range(samples):
        P = 10.0 ** rng.uniform(-1.0, 1.0, size=n)
        M = 10.0 ** rng.uniform(0.0, 2.0)
        q = 10.0 ** rng.uniform(-1.0, 1.0, size=n)
        pts.append({"P": P, "M": float(M), "q": q})
    return pts


def _interior(x, eps=1e-6) -> bool:
    x = np.asarray(x, dtype=float)
    return bool(np.all(np.isfinite(x)) and np.all(x > eps))


def _point_json(P=None, M=None, u=None, q=None, extra=None) -> dict:
    pt = {}
    if P is not None:
        pt["P"] = [float(v) for v in np.asarray(P).ravel()]
    if M is not None:
        pt["M"] = float(M)
    if u is not None:
        pt["u"] = float(u)
    if q is not None:
        pt["q"] = [float(v) for v in np.asarray(q).ravel()]
    if extra:
        pt.update(extra)
    return pt


# ---------------------------------------------------------------------------
# Slutsky
# ---------------------------------------------------------------------------


def check_slutsky(session: WheelSession, pi: PriceIncome, i: int, j: int) -> ResidualEntry:
    """Total price effect vs substitution + income decomposition at (P, M).

    i, j are 1-based good indices. The Hicksian side is evaluated at
    u = V(P, M)."""
    mdf = session.canonical_handle("MDF")
    hdf = session.canonical_handle("HDF")
    iuf = session.canonical_handle("IUF")
    P, M = pi.P, pi.M
    ii, jj = i - 1, j - 1
    u = float(iuf(P, M))
    x = mdf(P, M)

    hP = min(fd_step(P[jj]), 0.4 * P[jj])
    Pp, Pm = P.copy(), P.copy()
    Pp[jj] += hP
    Pm[jj] -= hP
    total = (mdf(Pp, M)[ii] - mdf(Pm, M)[ii]) / (2.0 * hP)
    substitution = (hdf(Pp, u)[ii] - hdf(Pm, u)[ii]) / (2.0 * hP)
    hM = fd_step(M)
    dx_dM = (mdf(P, M + hM)[ii] - mdf(P, M - hM)[ii]) / (2.0 * hM)
    income = dx_dM * float(x[jj])
    rhs = substitution - income
    residual = abs(total - rhs) / max(1.0, abs(total))
    return ResidualEntry(
        identity="slutsky",
        point=_point_json(P=P, M=M, extra={"i": i, "j": j}),
        lhs=float(total),
        rhs=float(rhs),
        residual=float(residual),
        passed=bool(residual <= TOL_DERIVATIVE),
        detail={
            "substitution": float(substitution),
            "income_effect": float(-income),
            "income_term": float(income),
            "u": u,
        },
    )


def slutsky_symmetry(session: WheelSession, pi: PriceIncome, i: int, j: int) -> ResidualEntry:
    """Bonus property: symmetry of the substitution matrix,
    dx_i^c/dP_j = dx_j^c/dP_i."""
    hdf = session.canonical_handle("HDF")
    iuf = session.canonical_handle("IUF")
    P, M = pi.P, pi.M
    u = float(iuf(P, M))

    def slope(row, col):
        h = min(fd_step(P[col]), 0.4 * P[col])
        Pp, Pm = P.copy(), P.copy()
        Pp[col] += h
        Pm[col] -= h
        return (hdf(Pp, u)[row] - hdf(Pm, u)[row]) / (2.0 * h)

    lhs = slope(i - 1, j - 1)
    rhs = slope(j - 1, i - 1)
    residual = abs(lhs - rhs) / max(1.0, abs(rhs))
    return ResidualEntry(
        identity="slutsky_symmetry",
        point=_point_json(P=P, M=M, extra={"i": i, "j": j}),
        lhs=float(lhs),
        rhs=float(rhs),
        residual=float(residual),
        passed=bool(residual <= TOL_DERIVATIVE),
        detail={"bonus": True},
    )


# ---------------------------------------------------------------------------
# Duality gap
# ---------------------------------------------------------------------------


def duality_gap(session: WheelSession, pi: PriceIncome) -> GapReport:
    """gap = M - E(P, V(P, M)) in the money metric; zero (to tolerance)
    whenever both problems attain the same optimal value, including corner
    optima of the non-convex family."""
    iuf = session.canonical_handle("IUF")
    ef = session.canonical_handle("EF")
    v = float(iuf(pi.P, pi.M))
    e = float(ef(pi.P, v))
    gap = pi.M - e
    return GapReport(
        primal_value=float(pi.M),
        dual_value=e,
        gap=float(gap),
        relative_gap=abs(gap) / pi.M,
    )


# ---------------------------------------------------------------------------
# Named identities
# ---------------------------------------------------------------------------


def _entries_for_identity(session: WheelSession, name: str, pts) -> tuple[list, int]:
    """(entries, excluded_count) for one named identity over sample points."""
    entries: list[ResidualEntry] = []
    excluded = 0
    mdf = session.canonical_handle("MDF")
    iuf = session.canonical_handle("IUF")

    def emit(identity, point, lhs, rhs, tol, detail=None):
        residual = _rel(lhs, rhs)
        entries.append(
            ResidualEntry(
                identity=identity,
                point=point,
                lhs=np.asarray(lhs, dtype=float).tolist()
                if np.ndim(lhs) else float(lhs),
                rhs=np.asarray(rhs, dtype=float).tolist()
                if np.ndim(rhs) else float(rhs),
                residual=residual,
                passed=bool(residual <= tol),
                detail=detail or {},
            )
        )

    if name in _EXPENSIVE:
        pts = pts[:_EXPENSIVE_CAP]

    for k, pt in enumerate(pts):
        P, M, q = pt["P"], pt["M"], pt["q"]
        try:
            x_ref = mdf(P, M)
        except (ConvergenceError, DomainError):
            excluded += 1
            continue
        interior = _interior(x_ref)

        try:
            if name == "roy":
                if not interior:
                    excluded += 1
                    continue
                test = session.run_transition("t_roy")(P, M)
                emit(name, _point_json(P=P, M=M), test, x_ref, TOL_DERIVATIVE)

            elif name == "norm_roy":
                if not interior:
                    excluded += 1
                    continue
                test = session.run_transition("t_norm_roy")(P / M)
                emit(name, _point_json(P=P, M=M), test, x_ref, TOL_DERIVATIVE)

            elif name == "shephard":
                u = float(iuf(P, M))
                xc_ref = session.canonical_handle("HDF")(P, u)
                if not _interior(xc_ref):
                    excluded += 1
                    continue
                test = session.run_transition("t_shephard")(P, u)
                emit(name, _point_json(P=P, u=u), test, xc_ref, TOL_DERIVATIVE)

            elif name == "norm_shephard":
                u = float(iuf(P, M))
                xc_ref = session.canonical_handle("HDF")(P, u)
                if not _interior(xc_ref):
                    excluded += 1
                    continue
                test = session.run_transition("t_norm_shephard")(P / M, u)
                emit(name, _point_json(P=P, u=u), test, xc_ref, TOL_DERIVATIVE)

            elif name == "hotelling_wold":
                if not interior:
                    excluded += 1
                    continue
                hidf = session.run_transition("t_hotelling_wold")
                emit(name, _point_json(P=P, M=M), hidf(x_ref), P / M, TOL_DERIVATIVE)
                phi_q = hidf(q)
                emit(
                    name,
                    _point_json(q=q),
                    float(phi_q @ q),
                    1.0,
                    TOL_SUBSTITUTION,
                    detail={"part": "euler_normalization"},
                )

            elif name == "antonelli":
                u = float(iuf(P, M))
                xc = session.canonical_handle("HDF")(P, u)
                if not _interior(xc):
                    excluded += 1
                    continue
                aidf = session.run_transition("t_antonelli")
                e = float(P @ xc)
                emit(name, _point_json(P=P, u=u), aidf(xc, u), P / e, TOL_DERIVATIVE)
                df = session.canonical_handle("DF")
                u_q = session.utility.value(q)
                if u_q > 0:  # Euler: psi(q,u).q = D(q,u) for degree-1 D
                    u_half = u_q / 2.0
                    emit(
                        name,
                        _point_json(q=q, u=u_half),
                        float(aidf(q, u_half) @ q),
                        float(df(q, u_half)),
                        TOL_DERIVATIVE,
                        detail={"part": "euler_homogeneity"},
                    )

            elif name == "iuf_ef_inverse":
                ef = session.canonical_handle("EF")
                v = float(iuf(P, M))
                emit(name, _point_json(P=P, M=M), float(ef(P, v)), M, TOL_SUBSTITUTION)
                u2 = v * 0.7 if v > 0 else v - 1.0
                e2 = float(ef(P, u2))
                emit(
                    name,
                    _point_json(P=P, u=u2),
                    float(iuf(P, e2)),
                    u2,
                    TOL_SUBSTITUTION,
                    detail={"part": "V(P,E(P,u))=u"},
                )

            elif name == "mdf_hdf_cross_u":
                if not interior:
                    excluded += 1
                    continue
                test = session.run_transition("t_iuf_to_mdf_via_hdf")(P, M)
                emit(name, _point_json(P=P, M=M), test, x_ref, TOL_SUBSTITUTION)

            elif name == "mdf_hdf_cross_M":
                u = float(iuf(P, M))
                xc_ref = session.canonical_handle("HDF")(P, u)
                if not _interior(xc_ref):
                    excluded += 1
                    continue
                test = session.run_transition("t_ef_to_hdf_via_mdf")(P, u)
                emit(name, _point_json(P=P, u=u), test, xc_ref, TOL_SUBSTITUTION)

            elif name == "duf_df_inverse":
                df = session.canonical_handle("DF")
                u_q = session.utility.value(q)
                emit(name, _point_json(q=q), float(df(q, u_q)), 1.0, TOL_SUBSTITUTION)
                rec = session.run_transition("t_df_to_duf")(q)
                emit(
                    name,
                    _point_json(q=q),
                    float(rec),
                    u_q,
                    TOL_SUBSTITUTION,
                    detail={"part": "recovered_utility"},
                )

            elif name == "dual_pair_duf_iuf":
                r = wheelcore.check_dual_pair_duf_iuf(session, q)
                emit(name, _point_json(q=q), r, 0.0, TOL_DERIVATIVE)

            elif name == "dual_pair_df_ef":
                u_q = session.utility.value(q)
                if not np.isfinite(u_q):
                    excluded += 1
                    continue
                r = wheelcore.check_dual_pair_df_ef(session, q, u_q)
                emit(name, _point_json(q=q, u=u_q), r, 0.0, TOL_DERIVATIVE)

            elif name == "slutsky":
                if not interior:
                    excluded += 1
                    continue
                n = session.utility.n_goods
                pairs = [(a + 1, b + 1) for a in range(n) for b in range(n)]
                i, j = pairs[k % len(pairs)]
                entries.append(check_slutsky(session, PriceIncome(P, M), i, j))

            else:
                raise ValueError(f"unknown identity {name!r}")

        except (ConvergenceError, DomainError, BracketError, AmbiguityError) as exc:
            entries.append(
                ResidualEntry(
                    identity=name,
                    point=_point_json(P=P, M=M, q=q),
                    lhs=math.nan,
                    rhs=math.nan,
                    residual=math.inf,
                    passed=False,
                    detail={"error": f"{type(exc).__name__}: {exc}"},
                )
            )
    return entries, excluded


def check_identity(session: WheelSession, name: str, samples: int = 25,
                   seed: int = 42) -> ResidualReport:
    """Residual report for one named identity over seeded sample points."""
    if name not in IDENTITY_NAMES:
        raise ValueError(
            f"unknown identity {name!r}; choose from {sorted(IDENTITY_NAMES)}"
        )
    pts = _sample_points(session, samples, seed)
    entries, excluded = _entries_for_identity(session, name, pts)
    return ResidualReport(
        entries=tuple(entries),
        tolerance=TOL_DERIVATIVE,
        seed=seed,
        sample_count=samples,
        excluded=excluded,
    )


# ---------------------------------------------------------------------------
# Loop closure
# ---------------------------------------------------------------------------

_INVERSION_TRANSITIONS = {
    "t_mdf_to_duf",
    "t_aidf_to_hdf",
    "t_hidf_to_mdf",
    "t_iuf_to_ef",
    "t_ef_to_iuf",
    "t_duf_to_df",
    "t_df_to_duf",
    "t_hdf_to_eaf",
}

SHORT_LOOP = ("t_primal_solve", "t_mdf_to_iuf", "t_mdf_to_duf")
LONG_LOOP = (
    "t_duf_to_df",
    "t_antonelli",
    "t_aidf_to_hdf",
    "t_hdf_to_ef",
    "t_ef_to_iuf",
    "t_roy",
    "t_mdf_to_duf",
)


def loop_tolerance(loop) -> float:
    """Error budget: the base derivative tolerance doubles for every
    solver-backed inversion beyond the first."""
    k = sum(1 for m in loop if m in _INVERSION_TRANSITIONS)
    return TOL_DERIVATIVE * (2.0 ** max(0, k - 1))


def check_loop_closure(session: WheelSession, loop, probes,
                       tolerance: float | None = None) -> ResidualReport:
    """Execute the loop in a fresh session (so the terminal handle derives
    from the loop's own legs) and compare it with the original handle at
    the probe bundles."""
    loop = tuple(m.method if isinstance(m, wheelcore.WheelEdge) else str(m) for m in loop)
    tol = loop_tolerance(loop) if tolerance is None else tolerance
    fresh = WheelSession(session.utility, session.settings)
    terminal, _ = wheelcore.execute_path(fresh, loop)
    original = session.canonical_handle(terminal.node) if terminal.node != "DUF" \
        else session.cache[("DUF", "seed")]
    entries = []
    for q in probes:
        q = np.asarray(q, dtype=float)
        try:
            ref = original(q)
            val = terminal(q)
            residual = _rel(val, ref)
            detail = {}
        except (AmbiguityError, ConvergenceError, BracketError, DomainError) as exc:
            ref, val, residual = math.nan, math.nan, math.inf
            detail = {"error": f"{type(exc).__name__}: {exc}"}
        entries.append(
            ResidualEntry(
                identity="loop_closure",
                point=_point_json(q=q, extra={"loop": list(loop)}),
                lhs=val if isinstance(val, float) else float(val),
                rhs=ref if isinstance(ref, float) else float(ref),
                residual=float(residual),
                passed=bool(residual <= tol),
                detail=detail,
            )
        )
    return ResidualReport(tuple(entries), tol, 0, len(entries))


def _loop_probes(session: WheelSession, count: int, seed: int = 7):
    rng = np.random.default_rng(seed)
    n = session.utility.n_goods
    return [10.0 ** rng.uniform(-0.3, 0.3, size=n) for _ in range(count)]


# ---------------------------------------------------------------------------
# Information loss (non-convex preferences)
# ---------------------------------------------------------------------------

_DEMO_PROBES = ((1.0, 1.0), (0.8, 0.8), (1.3, 0.4), (1.2, 0.0), (2.0, 0.0), (0.0, 2.0))


def information_loss_report(session: WheelSession, probes=_DEMO_PROBES,
                            tolerance: float = 1e-3) -> InfoLossReport:
    """Run the demand-and-back loop and compare recovered preferences with
    the original at probe bundles. AmbiguityError from the inversion is
    caught and recorded as evidence of multi-valued demand; the recovery
    then falls back to the lexicographically smallest root."""
    fresh = WheelSession(session.utility, session.settings)
    terminal, _ = wheelcore.execute_path(fresh, SHORT_LOOP)
    iuf = fresh.node_handle("IUF")
    original, recovered, ambiguous = [], [], []
    for q in probes:
        q = np.asarray(q, dtype=float)
        original.append(float(session.utility.value(q)))
        try:
            recovered.append(float(terminal(q)))
        except AmbiguityError as exc:
            ambiguous.append(tuple(float(v) for v in q))
            roots = sorted(tuple(float(v) for v in r) for r in exc.roots)
            if not roots:
                recovered.append(math.nan)
                continue
            recovered.append(float(iuf(np.asarray(roots[0]), 1.0)))
        except (ConvergenceError, BracketError, DomainError):
            ambiguous.append(tuple(float(v) for v in q))
            recovered.append(math.nan)
    flips = []
    for a in range(len(probes)):
        for b in range(a + 1, len(probes)):
            da = original[a] - original[b]
            db = recovered[a] - recovered[b]
            if math.isnan(db):
                continue
            if (da > 1e-9 and db < -1e-9) or (da < -1e-9 and db > 1e-9):
                flips.append((tuple(map(float, probes[a])), tuple(map(float, probes[b]))))
    deviation = any(
        not math.isnan(r) and abs(r - o) / max(1.0, abs(o)) > tolerance
        for o, r in zip(original, recovered)
    )
    return InfoLossReport(
        probes=tuple(tuple(map(float, p)) for p in probes),
        original_u_values=tuple(original),
        recovered_u_values=tuple(recovered),
        ranking_flips=tuple(flips),
        convexified=bool(flips or deviation or ambiguous),
        tolerance=tolerance,
        ambiguous_probes=tuple(ambiguous),
    )


def demo_information_loss() -> InfoLossReport:
    """The built-in demonstration on U = q1^2 + q2^2 (smooth preferences
    with indifference curves bowed toward the origin: demand is corner-
    valued and recovery can only see the concavified hull)."""
    session = WheelSession("q1^2+q2^2")
    return information_loss_report(session)


# ---------------------------------------------------------------------------
# Quasi-linear coincidence
# ---------------------------------------------------------------------------


def check_quasilinear_coincidence(samples: int = 25, seed: int = 42) -> ResidualReport:
    """On U = q1 + ln(q2): Marshallian and Hicksian demand for good 2
    coincide and the income derivative vanishes (no income effect), on the
    interior regime M > P1."""
    session = WheelSession("q1+ln(q2)")
    mdf = session.canonical_handle("MDF")
    hdf = session.canonical_handle("HDF")
    iuf = session.canonical_handle("IUF")
    rng = np.random.default_rng(seed)
    entries = []
    excluded = 0
    tol = 1e-5
    for _ in range(samples):
        P = 10.0 ** rng.uniform(-1.0, 1.0, size=2)
        M = 10.0 ** rng.uniform(0.0, 2.0)
        if M <= P[0] * 1.05:  # corner regime: good 1 drops out
            excluded += 1
            continue
        x = mdf(P, M)
        u = float(iuf(P, M))
        xc = hdf(P, u)
        r1 = abs(float(x[1]) - float(xc[1])) / max(1.0, abs(float(xc[1])))
        entries.append(
            ResidualEntry(
                "quasilinear_coincidence",
                _point_json(P=P, M=M),
                float(x[1]),
                float(xc[1]),
                r1,
                bool(r1 <= tol),
                detail={"part": "x2_M equals x2_c"},
            )
        )
        hM = fd_step(M)
        d = (mdf(P, M + hM)[1] - mdf(P, M - hM)[1]) / (2.0 * hM)
        entries.append(
            ResidualEntry(
                "quasilinear_coincidence",
                _point_json(P=P, M=M),
                float(d),
                0.0,
                abs(float(d)),
                bool(abs(d) <= tol),
                detail={"part": "income derivative of x2"},
            )
        )
    return ResidualReport(tuple(entries), tol, seed, samples, excluded)


# ---------------------------------------------------------------------------
# Batch verification
# ---------------------------------------------------------------------------


def _hidf_inversion_entries(session: WheelSession, pts) -> tuple[list, int]:
    """Route agreement t_hidf_to_mdf vs t_primal_solve; mismatches and
    AmbiguityErrors here are the observable signature of non-convexity."""
    entries = []
    excluded = 0
    mdf = session.canonical_handle("MDF")
    for pt in pts:
        P, M = pt["P"], pt["M"]
        try:
            ref = mdf(P, M)
            test = session.run_transition("t_hidf_to_mdf")(P, M)
            residual = _rel(test, ref)
            entries.append(
                ResidualEntry(
                    "hidf_inversion",
                    _point_json(P=P, M=M),
                    np.asarray(test, dtype=float).tolist(),
                    np.asarray(ref, dtype=float).tolist(),
                    residual,
                    bool(residual <= TOL_DERIVATIVE),
                )
            )
        except (AmbiguityError, ConvergenceError, DomainError) as exc:
            entries.append(
                ResidualEntry(
                    "hidf_inversion",
                    _point_json(P=P, M=M),
                    math.nan,
                    math.nan,
                    math.inf,
                    False,
                    detail={"error": f"{type(exc).__name__}: {exc}"},
                )
            )
    return entries, excluded


def verify_all(session: WheelSession, samples: int = 25, seed: int = 42) -> ResidualReport:
    """Every named identity, the HIDF-inversion route agreement, the duality
    gap at sampled points, and the short loop closure, concatenated. Never
    aborts; per-point failures are recorded in the entries."""
    pts = _sample_points(session, samples, seed)
    entries: list[ResidualEntry] = []
    excluded = 0
    for name in IDENTITY_NAMES:
        ent, exc = _entries_for_identity(session, name, pts)
        entries.extend(ent)
        excluded += exc
    ent, exc = _hidf_inversion_entries(session, pts[: min(samples, 10)])
    entries.extend(ent)
    excluded += exc
    for pt in pts[: min(samples, 10)]:
        try:
            rep = duality_gap(session, PriceIncome(pt["P"], pt["M"]))
            entries.append(
                ResidualEntry(
                    "duality_gap",
                    _point_json(P=pt["P"], M=pt["M"]),
                    rep.dual_value,
                    rep.primal_value,
                    rep.relative_gap,
                    bool(rep.relative_gap <= TOL_SUBSTITUTION),
                )
            )
        except (ConvergenceError, BracketError, DomainError) as exc2:
            entries.append(
                ResidualEntry(
                    "duality_gap",
                    _point_json(P=pt["P"], M=pt["M"]),
                    math.nan,
                    math.nan,
                    math.inf,
                    False,
                    detail={"error": f"{type(exc2).__name__}: {exc2}"},
                )
            )
    probes = _loop_probes(session, 10)
    entries.extend(check_loop_closure(session, SHORT_LOOP, probes).entries)
    return ResidualReport(tuple(entries), TOL_DERIVATIVE, seed, samples, excluded)
