"""Numerical primitives: budget-constrained maximization, expenditure
minimization, scalar root finding, finite differences, grid oracles.

Both optimizers run three stages:

1. lattice seed over the binding-constraint surface (batched tape kernel),
2. Nelder-Mead refinement on the constraint-substituted parameterization,
3. interior Newton polish on the tangency + constraint system, using the
   symbolic gradient and Hessian of U.

Stage 3 only replaces the stage-2 point when it strictly verifies (feasible,
interior, no worse objective). It is what pushes optima from ~sqrt(eps)
accuracy to near machine precision, which the finite-difference identity
checks downstream depend on.

All operations are pure and safe for concurrent use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import (
    BracketError,
    ConvergenceError,
    DomainError,
    InfeasibleError,
)
from .exprdsl import UtilityExpr

FEASIBILITY_TOL = 1e-8       # relative binding-constraint residual
OPT_XATOL = 1e-11            # Nelder-Mead simplex diameter
NEWTON_TOL = 1e-13
FD_STEP = 1e-6               # relative central-difference step
INTERIOR_W = 1e-6            # weight-space interior threshold
# Lexicographic tie-break window. Must sit well below h^2/4 ~ 2.5e-13 (the
# envelope-theorem value gap a fd-step price perturbation induces between
# the true optimum and a stale candidate), or ties would eat the very
# displacement finite differences measure. Genuine corner ties are exact.
TIE_TOL = 1e-14

_LATTICE_PER_DIM = {2: 193, 3: 41, 4: 21}


@dataclass(frozen=True)
class PriceIncome:
    """Strictly positive money prices and income."""

    P: np.ndarray
    M: float

    def __init__(self, P, M):
        P = np.asarray(P, dtype=float)
        M = float(M)
        if P.ndim != 1 or P.size < 2:
            raise DomainError("price vector must have at least two components")
        if not (np.all(np.isfinite(P)) and np.all(P > 0)):
            raise DomainError("all prices must be finite and strictly positive")
        if not (math.isfinite(M) and M > 0):
            raise DomainError("income must be finite and strictly positive")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "M", M)

    @property
    def n(self) -> int:
        return self.P.size

    def normalized(self) -> "NormalizedPrices":
        return NormalizedPrices(self.P / self.M)


@dataclass(frozen=True)
class NormalizedPrices:
    """Prices divided by income (p = P/M); normalized income is 1."""

    p: np.ndarray

    def __init__(self, p):
        p = np.asarray(p, dtype=float)
        if not (np.all(np.isfinite(p)) and np.all(p > 0)):
            raise DomainError("normalized prices must be finite and positive")
        object.__setattr__(self, "p", p)


@dataclass(frozen=True)
class SolveResult:
    """Optimum found by one of the constrained solvers."""

    bundle: np.ndarray
    value: float
    converged: bool
    iterations: int
    constraint_residual: float


def validate_bundle(q, n: int) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (n,):
        raise DomainError(f"bundle has shape {q.shape}, expected ({n},)")
    if not np.all(np.isfinite(q)) or np.any(q < 0):
        raise DomainError("bundle components must be finite and nonnegative")
    return q


# ---------------------------------------------------------------------------
# Scalar helpers
# ---------------------------------------------------------------------------


def brent_root(g, lo: float, hi: float, tol: float = 1e-12) -> float:
    """Root of g on [lo, hi] by Brent's method (inverse quadratic /
    secant / bisection). Requires a sign change; raises BracketError
    otherwise. Terminates when |g| <= tol or the bracket width <= tol."""
    a, b = float(lo), float(hi)
    fa, fb = g(a), g(b)
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if fa * fb > 0.0:
        raise BracketError(f"no sign change on [{lo:g}, {hi:g}]")
    c, fc = a, fa
    d = e = b - a
    eps = np.finfo(float).eps
    for _ in range(200):
        if abs(fc) < abs(fb):
            a, b, c = b, c, b
            fa, fb, fc = fb, fc, fb
        tol1 = 2.0 * eps * abs(b) + 0.5 * tol
        m = 0.5 * (c - b)
        if abs(m) <= tol1 or fb == 0.0 or abs(fb) <= tol:
            return b
        if abs(e) < tol1 or abs(fa) <= abs(fb):
            d = e = m
        else:
            s = fb / fa
            if a == c:
                p = 2.0 * m * s
                q = 1.0 - s
            else:
                qq = fa / fc
                r = fb / fc
                p = s * (2.0 * m * qq * (qq - r) - (b - a) * (r - 1.0))
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0)
            if p > 0.0:
                q = -q
            else:
                p = -p
            s = e
            e = d
            if 2.0 * p < 3.0 * m * q - abs(tol1 * q) and p < abs(0.5 * s * q):
                d = p / q
            else:
                d = e = m
        a, fa = b, fb
        b += d if abs(d) > tol1 else math.copysign(tol1, m)
        fb = g(b)
        if (fb > 0.0) == (fc > 0.0):
            c, fc = a, fa
            d = e = b - a
    return b


def central_diff(f, x, i: int, h: float | None = None) -> float:
    """(f(x + h e_i) - f(x - h e_i)) / 2h with the default relative step."""
    x = np.asarray(x, dtype=float)
    if h is None:
        h = FD_STEP * max(1.0, abs(x[i]))
    xp = x.copy()
    xm = x.copy()
    xp[i] += h
    xm[i] -= h
    return (f(xp) - f(xm)) / (2.0 * h)


def fd_step(v: float) -> float:
    return FD_STEP * max(1.0, abs(v))


# ---------------------------------------------------------------------------
# Lattices
# ---------------------------------------------------------------------------


def simplex_lattice(n: int, k: int) -> np.ndarray:
    """All weight vectors with components at multiples of 1/(k-1), summing
    to 1: the uniform lattice on the (n-1)-simplex, vertices included."""
    if n == 2:
        t = np.linspace(0.0, 1.0, k)
        return np.column_stack([t, 1.0 - t])
    grids = np.indices((k,) * (n - 1)).reshape(n - 1, -1).T
    keep = grids.sum(axis=1) <= k - 1
    w = grids[keep] / (k - 1)
    return np.column_stack([w, 1.0 - w.sum(axis=1)])


def _lex_best(bundles: np.ndarray, values: np.ndarray, maximize: bool) -> int:
    """Index of the best value; ties within TIE_TOL broken by the
    lexicographically smallest bundle (determinism for corner regimes)."""
    v = values if maximize else -values
    vmax = np.nanmax(v)
    ties = np.flatnonzero(v >= vmax - TIE_TOL * max(1.0, abs(vmax)))
    if ties.size == 1:
        return int(ties[0])
    order = np.lexsort(bundles[ties].T[::-1])
    return int(ties[order[0]])


# ---------------------------------------------------------------------------
# Newton polish (tangency + binding constraint)
# ---------------------------------------------------------------------------


def _newton_polish(expr, P, q0, constraint, constraint_grad, tol=NEWTON_TOL):
    """Solve {grad U_i * P_n = grad U_n * P_i (i < n), constraint(q) = 0}.

    Returns (q, ok, iterations). Damped steps keep q strictly positive.
    """
    n = q0.size
    q = q0.copy()
    scale = max(1.0, float(np.max(np.abs(q0))))

    def system(qv):
        g = expr.gradient(qv)
        h = expr.hessian(qv)
        F = np.empty(n)
        J = np.empty((n, n))
        F[: n - 1] = g[: n - 1] * P[n - 1] - g[n - 1] * P[: n - 1]
        J[: n - 1] = h[: n - 1] * P[n - 1] - np.outer(P[: n - 1], h[n - 1])
        F[n - 1] = constraint(qv)
        J[n - 1] = constraint_grad(qv)
        return F, J

    try:
        F, J = system(q)
    except DomainError:
        return q0, False, 0
    fnorm = np.linalg.norm(F)
    for it in range(60):
        if not np.all(np.isfinite(F)) or not np.all(np.isfinite(J)):
            return q0, False, it
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            return q0, False, it
        alpha = 1.0
        for _ in range(30):
            q_new = q + alpha * step
            if np.all(q_new > 0):
                try:
                    F_new, J_new = system(q_new)
                except DomainError:
                    F_new = None
                if F_new is not None and np.all(np.isfinite(F_new)):
                    fn = np.linalg.norm(F_new)
                    if fn <= fnorm * (1.0 - 1e-4 * alpha) or fn < tol:
                        break
            alpha *= 0.5
        else:
            return q0, False, it
        q, F, J, fnorm = q_new, F_new, J_new, fn
        if fnorm < tol * scale and np.linalg.norm(alpha * step) < tol * scale * 10:
            return q, True, it + 1
    return (q, True, 60) if fnorm < 1e3 * tol * scale else (q0, False, 60)


# ---------------------------------------------------------------------------
# Budget-constrained maximization (the primal problem)
# ---------------------------------------------------------------------------


def maximize_on_budget(expr: UtilityExpr, pi: PriceIncome) -> SolveResult:
    """max U(q) over {q >= 0, P.q <= M}. Under local nonsatiation the budget
    binds, so the search runs on the face P.q = M, parameterized by simplex
    weights w (q_i = w_i M / P_i). Degree-zero homogeneity in (P, M) holds
    exactly because the parameterization only sees M/P_i ratios jointly.

    Stages: lattice seed, then Newton on the tangency system when the seed
    is interior; Nelder-Mead refinement (plus a second Newton) runs as the
    fallback, which is also the corner-solution path.
    """
    n = pi.n
    if expr.n_goods != n:
        raise DomainError(
            f"utility has {expr.n_goods} goods but {n} prices were given"
        )
    scale = pi.M / pi.P  # per-good bundle scale on the face

    def value_at(q):
        v = expr.eval_many(q[None, :])[0]
        return float(v) if np.isfinite(v) else -math.inf

    def newton_from(q0):
        return _newton_polish(
            expr,
            pi.P,
            q0,
            constraint=lambda q: float(pi.P @ q - pi.M) / pi.M,
            constraint_grad=lambda q: pi.P / pi.M,
        )

    k = _LATTICE_PER_DIM.get(n, 21)
    W = simplex_lattice(n, k)
    vals = expr.eval_many(W * scale)
    vals[~np.isfinite(vals)] = -np.inf
    if not np.any(np.isfinite(vals)):
        raise ConvergenceError("utility undefined on the entire budget face")
    best = _lex_best(W * scale, vals, maximize=True)
    q_seed = W[best] * scale
    candidates = [q_seed]
    candidates.extend(np.eye(n)[i] * scale for i in range(n))  # exact corners
    iters = 0
    q_polished = None

    newton_ok = False
    if np.all(W[best] > 2.0 / (k - 1)):  # seed safely interior
        q_new, ok, nit = newton_from(q_seed)
        iters += nit
        if ok and np.all(q_new > 0) and value_at(q_new) >= vals[best] - 1e-12 * max(
            1.0, abs(vals[best])
        ):
            candidates.append(q_new)
            q_polished = q_new
            newton_ok = True

    nm_ok = False
    if not newton_ok:

        def objective(wfree):
            w_last = 1.0 - wfree.sum()
            if np.any(wfree < 0.0) or w_last < 0.0:
                worst = min(float(np.min(wfree, initial=0.0)), w_last)
                return 1e12 * (1.0 - worst)
            q = np.append(wfree, w_last) * scale
            v = expr.eval_many(q[None, :])[0]
            return -v if np.isfinite(v) else 1e12

        nm = optimize.minimize(
            objective,
            W[best][:-1],
            method="Nelder-Mead",
            options={"xatol": OPT_XATOL, "fatol": 1e-14, "maxiter": 2000},
        )
        iters += int(nm.nit)
        nm_ok = bool(nm.success)
        if np.all(nm.x >= -1e-12) and nm.x.sum() <= 1.0 + 1e-12:
            w_nm = np.append(np.clip(nm.x, 0.0, 1.0), max(0.0, 1.0 - nm.x.sum()))
            w_nm[w_nm < 1e-12] = 0.0
            w_nm /= w_nm.sum()
            q_nm = w_nm * scale
            candidates.append(q_nm)
            if np.all(w_nm > INTERIOR_W):
                q_new, ok, nit = newton_from(q_nm)
                iters += nit
                if ok and np.all(q_new > 0) and value_at(q_new) >= value_at(
                    q_nm
                ) - 1e-12 * max(1.0, abs(value_at(q_nm))):
                    candidates.append(q_new)
                    q_polished = q_new

    cand = np.array(candidates)
    cvals = expr.eval_many(cand)
    cvals[~np.isfinite(cvals)] = -np.inf
    q_best = cand[_lex_best(cand, cvals, maximize=True)]
    # a converged tangency point pins the optimum more precisely than value
    # comparison can resolve; prefer it within the value-noise window
    if q_polished is not None and value_at(q_polished) >= value_at(
        q_best
    ) - 1e-12 * max(1.0, abs(value_at(q_best))):
        q_best = q_polished

    if not (newton_ok or nm_ok):
        raise ConvergenceError("both refinement stages failed on the primal problem")

    residual = abs(float(pi.P @ q_best) - pi.M) / pi.M
    return SolveResult(q_best, value_at(q_best), True, iters, residual)


# ---------------------------------------------------------------------------
# Expenditure minimization (the dual problem, constraint U(q) >= u)
# ---------------------------------------------------------------------------


def _radius_on_ray(expr, d, u_target, hint, tol=1e-13):
    """Smallest lam with U(lam d) = u_target along the ray, found by Brent
    from a bracket expanded around `hint`. NaN when the ray never attains
    the target. Monotonicity of U along rays makes the crossing unique."""
    d = np.asarray(d, dtype=float)
    row = np.empty((1, d.size))

    def g(lam):
        row[0] = d * lam
        v = expr.eval_many(row)[0]
        return (v - u_target) if np.isfinite(v) else -1e30

    hi = max(hint, 1e-12)
    lo = 0.0
    ghi = g(hi)
    if ghi < 0.0:
        for _ in range(90):
            lo, hi = hi, hi * 2.0
            ghi = g(hi)
            if ghi >= 0.0:
                break
            if hi > 1e9:
                return math.nan
        else:
            return math.nan
    else:
        while hi > 1e-12:
            cand = hi * 0.5
            if g(cand) < 0.0:
                lo = cand
                break
            hi = cand
        else:
            return hi
    if ghi == 0.0:
        return hi
    try:
        return brent_root(g, lo, hi, tol=tol * max(1.0, hi))
    except BracketError:
        return math.nan


def _radii_batch(expr, dirs, u_target, hi0, iters=100):
    """Vectorized version of `_radius_on_ray` over a direction array.
    `iters` bisection rounds: 40 is plenty for a solver seed, 100 gives
    machine precision."""
    n_dirs = dirs.shape[0]
    hi = np.full(n_dirs, hi0)
    alive = np.ones(n_dirs, dtype=bool)
    reached = np.zeros(n_dirs, dtype=bool)
    for _ in range(90):
        idx = np.flatnonzero(alive & ~reached)
        if idx.size == 0:
            break
        v = expr.eval_many(dirs[idx] * hi[idx, None])
        ok = np.isfinite(v) & (v >= u_target)
        reached[idx[ok]] = True
        grow = idx[~ok]
        hi[grow] *= 2.0
        alive[grow[hi[grow] > 1e9]] = False
    lo = np.zeros(n_dirs)
    for _ in range(iters):
        idx = np.flatnonzero(reached)
        if idx.size == 0:
            break
        mid = 0.5 * (lo[idx] + hi[idx])
        v = expr.eval_many(dirs[idx] * mid[:, None])
        ok = np.isfinite(v) & (v >= u_target)
        hi[idx[ok]] = mid[ok]
        lo[idx[~ok]] = mid[~ok]
    hi[~reached] = np.nan
    return hi


def minimize_expenditure(expr: UtilityExpr, P, u_target: float) -> SolveResult:
    """min P.q over {q >= 0, U(q) >= u_target}. The binding constraint is
    substituted out by parameterizing bundles as lam(d) * d over directions d
    on the unit simplex, lam(d) being the indifference radius along the ray.
    """
    P = np.asarray(P, dtype=float)
    n = expr.n_goods
    if P.shape != (n,) or not np.all(P > 0):
        raise DomainError("prices must be strictly positive, one per good")
    u_target = float(u_target)

    # free-lunch shortcut: the (clamped) origin already meets the target
    origin_val = expr.eval_many(np.full((1, n), 1e-12))[0]
    if np.isfinite(origin_val) and origin_val >= u_target:
        return SolveResult(np.zeros(n), 0.0, True, 0, 0.0)

    # attainability probe along the diagonal, establishes a radius scale
    margin = u_target + 0.01 * max(1.0, abs(u_target))
    s = 1.0
    while True:
        v = expr.eval_many(np.full((1, n), s))[0]
        if np.isfinite(v) and v >= margin:
            break
        s *= 4.0
        if s > 1e6:
            raise InfeasibleError(
                f"utility level {u_target:g} not attainable within the search box"
            )

    u_scale = max(1.0, abs(u_target))

    def newton_from(q0):
        return _newton_polish(
            expr,
            P,
            q0,
            constraint=lambda q: (expr.value(np.maximum(q, 1e-300)) - u_target)
            / u_scale,
            constraint_grad=lambda q: expr.gradient(q) / u_scale,
        )

    def feasible_cheaper(q_new, cost_ref):
        if not np.all(q_new > 0):
            return False
        try:
            feas = expr.value(q_new) >= u_target - FEASIBILITY_TOL * u_scale
        except DomainError:
            return False
        return feas and P @ q_new <= cost_ref + 1e-12 * max(1.0, cost_ref)

    k = _LATTICE_PER_DIM.get(n, 21)
    dirs = simplex_lattice(n, k)
    radii = _radii_batch(expr, dirs, u_target, s, iters=40)
    costs = radii * (dirs @ P)
    costs[~np.isfinite(costs)] = np.inf
    if not np.any(np.isfinite(costs)):
        raise ConvergenceError("no direction on the lattice attains the target")
    bundles = dirs * radii[:, None]
    bundles[~np.isfinite(radii)] = 0.0
    best = _lex_best(bundles, costs, maximize=False)
    lam_hint = radii[best]
    candidates = [bundles[best]]
    for i in range(n):  # exact axis corners where attainable
        lam = _radius_on_ray(expr, np.eye(n)[i], u_target, s)
        if np.isfinite(lam):
            candidates.append(np.eye(n)[i] * lam)
    iters = 0
    q_polished = None

    newton_ok = False
    if np.all(dirs[best] > 2.0 / (k - 1)):  # seed safely interior
        q_new, ok, nit = newton_from(bundles[best])
        iters += nit
        if ok and feasible_cheaper(q_new, float(costs[best])):
            candidates.append(q_new)
            q_polished = q_new
            newton_ok = True

    nm_ok = False
    if not newton_ok:

        def objective(wfree):
            w_last = 1.0 - wfree.sum()
            if np.any(wfree < 0.0) or w_last < 0.0:
                worst = min(float(np.min(wfree, initial=0.0)), w_last)
                return 1e12 * (1.0 - worst)
            d = np.append(wfree, w_last)
            lam = _radius_on_ray(expr, d, u_target, max(lam_hint, 1e-12) * 2.0)
            if not np.isfinite(lam):
                return 1e12
            return lam * float(d @ P)

        nm = optimize.minimize(
            objective,
            dirs[best][:-1],
            method="Nelder-Mead",
            options={"xatol": OPT_XATOL, "fatol": 1e-14, "maxiter": 2000},
        )
        iters += int(nm.nit)
        nm_ok = bool(nm.success)
        if np.all(nm.x >= -1e-12) and nm.x.sum() <= 1.0 + 1e-12:
            w_nm = np.append(np.clip(nm.x, 0.0, 1.0), max(0.0, 1.0 - nm.x.sum()))
            w_nm[w_nm < 1e-12] = 0.0
            w_nm /= w_nm.sum()
            lam = _radius_on_ray(expr, w_nm, u_target, max(lam_hint, 1e-12) * 2.0)
            if np.isfinite(lam):
                q_nm = w_nm * lam
                candidates.append(q_nm)
                if np.all(w_nm > INTERIOR_W):
                    q_new, ok, nit = newton_from(q_nm)
                    iters += nit
                    if ok and feasible_cheaper(q_new, float(P @ q_nm)):
                        candidates.append(q_new)
                        q_polished = q_new

    cand = np.array(candidates)
    cvals = cand @ P
    q_best = cand[_lex_best(cand, cvals, maximize=False)]
    # converged tangency certificate beats value-level comparison
    if q_polished is not None and float(P @ q_polished) <= float(
        P @ q_best
    ) + 1e-12 * max(1.0, float(P @ q_best)):
        q_best = q_polished

    if not (newton_ok or nm_ok):
        raise ConvergenceError("both refinement stages failed on the dual problem")

    value = float(P @ q_best)
    try:
        u_at = expr.value(np.maximum(q_best, 1e-300))
    except DomainError:
        u_at = math.nan
    residual = abs(u_at - u_target) / max(1.0, abs(u_target))
    return SolveResult(q_best, value, True, iters, residual)


# ---------------------------------------------------------------------------
# Brute-force oracle
# ---------------------------------------------------------------------------


def grid_oracle_budget(
    expr: UtilityExpr, pi: PriceIncome, points_per_dim: int
) -> SolveResult:
    """Exhaustive scan of a uniform lattice on the budget face P.q = M.
    Independent check on the primal solver; n_goods <= 3 only."""
    n = pi.n
    if n > 3:
        raise DomainError("grid oracle supports at most 3 goods")
    W = simplex_lattice(n, points_per_dim)
    Q = W * (pi.M / pi.P)
    vals = expr.eval_many(Q)
    vals[~np.isfinite(vals)] = -np.inf
    best = _lex_best(Q, vals, maximize=True)
    return SolveResult(Q[best], float(vals[best]), True, W.shape[0], 0.0)
