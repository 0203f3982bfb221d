"""Acceptance suite: one test per criterion, each at its stated tolerance,
printing a PASS line on success (run with -s to see them inline).

The analytic demand/expenditure oracles used here are validated against the
brute-force lattice scan inside the families module and in test_families,
so each criterion is checked against independently established ground truth.
"""

import json
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from dualwheel import verify
from dualwheel.cli import main as cli_main
from dualwheel.families import make_family, oracle_eval
from dualwheel.numkit import PriceIncome, grid_oracle_budget, maximize_on_budget
from dualwheel.service import create_app
from dualwheel.wheelcore import (
    NODES,
    WheelSession,
    check_dual_pair_df_ef,
    check_dual_pair_duf_iuf,
    plan_path,
)

FAMILY_SPECS = [
    ("cobb_douglas", {"a1": 0.3}),
    ("ces", {"a": 0.5, "rho": -1.0}),
    ("ces", {"a": 0.5, "rho": 0.5}),
]


def _report(criterion: str, detail: str):
    print(f"[acceptance] PASS {criterion}: {detail}", flush=True)


def _sample_pm(rng, n=2):
    P = 10.0 ** rng.uniform(-1.0, 1.0, size=n)
    M = 10.0 ** rng.uniform(0.0, 2.0)
    return P, float(M)


def test_criterion_1_oracle_equivalence_primal():
    started = time.monotonic()
    rng = np.random.default_rng(42)
    worst = 0.0
    for a1 in [round(0.1 * k, 1) for k in range(1, 10)]:
        inst = make_family("cobb_douglas", {"a1": a1})
        for _ in range(100):
            P, M = _sample_pm(rng)
            x = maximize_on_budget(inst.utility, PriceIncome(P, M)).bundle
            x_oracle = oracle_eval(inst, "MDF", P, M)
            rel = float(np.max(np.abs(x - x_oracle) / np.abs(x_oracle)))
            worst = max(worst, rel)
            assert rel < 1e-4
    elapsed = time.monotonic() - started
    assert elapsed < 10.0
    _report(
        "criterion 1 (primal oracle equivalence)",
        f"900 points, worst rel err {worst:.2e}, {elapsed:.1f}s < 10s",
    )


def test_criterion_2_brute_force_floor():
    rng = np.random.default_rng(7)
    instances = [make_family(n, p) for n, p in FAMILY_SPECS]
    instances += [make_family("quasilinear"), make_family("nonconvex_demo")]
    checked = 0
    for inst in instances:
        for _ in range(3):
            P, M = _sample_pm(rng)
            pi = PriceIncome(P, M)
            res = maximize_on_budget(inst.utility, pi)
            oracle = grid_oracle_budget(inst.utility, pi, 10001)
            assert res.value >= oracle.value - 1e-6
            checked += 1
    _report(
        "criterion 2 (brute-force floor)",
        f"solver >= 1e4-point lattice - 1e-6 on {checked} instance points",
    )


def test_criterion_3_identity_suite():
    started = time.monotonic()
    names = (
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
    )
    total = 0
    for fam, params in FAMILY_SPECS:
        session = WheelSession(make_family(fam, params).utility)
        for name in names:
            rep = verify.check_identity(session, name, samples=25, seed=42)
            bad = [e for e in rep.entries if e.residual > 1e-3]
            assert not bad, f"{fam}{params} {name}: {bad[0].residual:.2e}"
            assert rep.entries, f"{fam}{params} {name}: all samples excluded"
            total += len(rep.entries)
    elapsed = time.monotonic() - started
    assert elapsed < 60.0
    _report(
        "criterion 3 (identity suite)",
        f"{total} entries across CD and CES rho in (-1, 0.5), all < 1e-3, "
        f"{elapsed:.1f}s < 60s",
    )


def test_criterion_4_slutsky():
    for fam, params in FAMILY_SPECS:
        session = WheelSession(make_family(fam, params).utility)
        rep = verify.check_identity(session, "slutsky", samples=25, seed=42)
        assert rep.entries
        worst = max(e.residual for e in rep.entries)
        assert worst < 1e-3, f"{fam}{params}: {worst:.2e}"
    # the hand-derived decomposition at the canonical point
    cd = WheelSession("q1^0.5*q2^0.5")
    e = verify.check_slutsky(cd, PriceIncome([1.0, 1.0], 2.0), 1, 1)
    assert abs(e.lhs - (-1.0)) < 1e-3
    assert abs(e.detail["substitution"] - (-0.5)) < 1e-3
    assert abs(-e.detail["income_term"] - (-0.5)) < 1e-3
    _report(
        "criterion 4 (Slutsky)",
        "25 interior points per family < 1e-3; -1 = -0.5 - 0.5 at CD (1,1,M=2)",
    )


def test_criterion_5_duality_gap():
    rng = np.random.default_rng(11)
    specs = FAMILY_SPECS + [("nonconvex_demo", {})]
    worst = 0.0
    for fam, params in specs:
        session = WheelSession(make_family(fam, params).utility)
        for _ in range(5):
            P, M = _sample_pm(rng)
            rep = verify.duality_gap(session, PriceIncome(P, M))
            worst = max(worst, rep.relative_gap)
            assert rep.relative_gap < 1e-5, f"{fam}: {rep.relative_gap:.2e}"
    _report(
        "criterion 5 (duality gap)",
        f"|M - E(P,V(P,M))|/M < 1e-5 incl. non-convex corners, worst {worst:.2e}",
    )


def test_criterion_6_loop_closure():
    cd = WheelSession("q1^0.5*q2^0.5")
    probes = verify._loop_probes(cd, 10)
    short = verify.check_loop_closure(cd, verify.SHORT_LOOP, probes, tolerance=1e-3)
    assert not short.failures
    worst_short = max(e.residual for e in short.entries)
    long = verify.check_loop_closure(cd, verify.LONG_LOOP, probes, tolerance=1e-2)
    assert not long.failures
    worst_long = max(e.residual for e in long.entries)
    _report(
        "criterion 6 (loop closure)",
        f"short loop worst {worst_short:.2e} < 1e-3; "
        f"long loop worst {worst_long:.2e} < 1e-2, 10 probes each",
    )


def test_criterion_7_information_loss():
    a = verify.demo_information_loss()
    b = verify.demo_information_loss()
    assert a.convexified is True
    assert len(a.ranking_flips) >= 1
    assert a.recovered_u_values == b.recovered_u_values  # deterministic
    assert a.ranking_flips == b.ranking_flips
    control = verify.information_loss_report(
        WheelSession("q1^0.5*q2^0.5"),
        probes=((1.0, 1.0), (0.8, 0.8), (1.3, 0.4), (1.5, 0.5)),
    )
    assert control.convexified is False
    _report(
        "criterion 7 (information loss)",
        f"non-convex: convexified with {len(a.ranking_flips)} flip(s), "
        "deterministic; CD control not convexified",
    )


def test_criterion_8_quasilinear_coincidence():
    rep = verify.check_quasilinear_coincidence(samples=25, seed=42)
    assert rep.entries
    coincide = [e for e in rep.entries if e.detail.get("part") == "x2_M equals x2_c"]
    income = [e for e in rep.entries if "income" in e.detail.get("part", "")]
    assert coincide and income
    worst_c = max(abs(e.lhs - e.rhs) for e in coincide)
    worst_i = max(abs(e.lhs) for e in income)
    assert worst_c < 1e-5 and worst_i < 1e-5
    _report(
        "criterion 8 (quasi-linear coincidence)",
        f"|x2_M - x2_c| worst {worst_c:.2e}, |dx2/dM| worst {worst_i:.2e}, "
        f"both < 1e-5 over {len(coincide)} interior samples",
    )


def test_criterion_9_dual_pair_recoveries():
    session = WheelSession("q1^0.5*q2^0.5")
    rng = np.random.default_rng(42)
    worst_a = worst_b = 0.0
    for _ in range(10):
        q = 10.0 ** rng.uniform(-0.3, 0.3, size=2)
        r1 = check_dual_pair_duf_iuf(session, q)
        u = session.utility.value(q)
        r2 = check_dual_pair_df_ef(session, q, u)
        worst_a, worst_b = max(worst_a, r1), max(worst_b, r2)
        assert r1 < 1e-3 and r2 < 1e-3
    _report(
        "criterion 9 (dual-pair recoveries)",
        f"DUF/IUF worst {worst_a:.2e}, DF/EF worst {worst_b:.2e} at 10 points",
    )


def test_criterion_10_planner():
    for node in NODES:
        path = plan_path("DUF", node)
        assert path == [] or path[-1].dst == node
    hdf_path = plan_path("DUF", "HDF")
    assert len(hdf_path) <= 4
    reference = {n: [e.method for e in plan_path("DUF", n)] for n in NODES}
    for _ in range(3):
        again = {n: [e.method for e in plan_path("DUF", n)] for n in NODES}
        assert again == reference
    _report(
        "criterion 10 (planner)",
        f"all 10 nodes reachable from DUF, DUF->HDF in {len(hdf_path)} edges, "
        "BFS deterministic",
    )


def test_criterion_11_shell_contract(capsys):
    code = cli_main(
        [
            "verify", "--family", "cobb_douglas:a1=0.5", "--all",
            "--samples", "6", "--seed", "42", "--format", "json",
        ]
    )
    out = capsys.readouterr().out
    assert code == 0
    payload = json.loads(out)
    assert payload["failures"] == 0

    transcript = [
        ("transition", {"edge": "t_primal_solve", "point": {"P": [1, 2], "M": 7}}),
        ("transition", {"edge": "t_roy", "point": {"P": [1, 2], "M": 7}}),
        ("evaluate", {"node": "EF", "point": {"P": [1, 2], "u": 1.1}}),
        ("verify", {"identities": ["hotelling_wold"], "samples": 4, "seed": 42}),
    ]

    def replay():
        client = TestClient(create_app())  # fresh service: a restart
        sid = client.post("/api/session", json={"utility": "q1^0.3*q2^0.7"}).json()[
            "session_id"
        ]
        return [
            client.post(f"/api/session/{sid}/{ep}", json=body).text
            for ep, body in transcript
        ]

    assert replay() == replay()
    with capsys.disabled():
        _report(
            "criterion 11 (shell contract)",
            "verify --all --format json exit 0 with zero failures; "
            "restart replay byte-identical",
        )
