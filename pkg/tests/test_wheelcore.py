import numpy as np
import pytest

from dualwheel.errors import AmbiguityError, DomainError, NoPathError
from dualwheel.wheelcore import (
    EDGES,
    NODES,
    TRANSITION_NAMES,
    WheelSession,
    check_dual_pair_df_ef,
    check_dual_pair_duf_iuf,
    execute_path,
    plan_path,
)

P14 = np.array([1.0, 4.0])
P11 = np.array([1.0, 1.0])


@pytest.fixture(scope="module")
def cd():
    return WheelSession("q1^0.5*q2^0.5")


@pytest.fixture(scope="module")
def cd37():
    return WheelSession("q1^0.3*q2^0.7")


class TestGraphCensus:
    def _pairs(self, kind):
        return {frozenset((e.src, e.dst)) for e in EDGES if e.kind == kind}

    def test_node_set(self):
        assert set(NODES) == {
            "DUF", "IUF", "EF", "DF", "MDF", "HDF", "HIDF", "AIDF", "BC", "EAF",
        }

    def test_dual_pairs_exact(self):
        assert self._pairs("dual") == {
            frozenset(("DUF", "IUF")),
            frozenset(("DF", "EF")),
        }

    def test_inverse_pairs_exact(self):
        assert self._pairs("inverse") == {
            frozenset(("DUF", "DF")),
            frozenset(("HIDF", "MDF")),
            frozenset(("AIDF", "HDF")),
            frozenset(("IUF", "EF")),
        }

    def test_counterpart_pairs_exact(self):
        assert self._pairs("counterpart") == {
            frozenset(("MDF", "HDF")),
            frozenset(("HIDF", "AIDF")),
            frozenset(("BC", "EAF")),
        }

    def test_required_derivative_edges_present(self):
        derivative = {(e.src, e.dst) for e in EDGES if e.kind == "derivative"}
        for required in [
            ("DUF", "HIDF"),
            ("IUF", "MDF"),
            ("EF", "HDF"),
            ("DF", "AIDF"),
            ("DUF", "MDF"),
        ]:
            assert required in derivative
        assert ("DF", "HDF") in derivative or ("EAF", "HDF") in derivative
        # the two cross-substitutions, distinguishable by method name
        methods = {e.method for e in EDGES if e.kind == "derivative"}
        assert {"t_iuf_to_mdf_via_hdf", "t_ef_to_hdf_via_mdf"} <= methods

    def test_edge_count_covers_ui_census(self):
        assert len(EDGES) >= 16


class TestTransitions:
    def test_primal_solve_and_scaling(self, cd37):
        mdf = cd37.run_transition("t_primal_solve")
        assert np.allclose(mdf(np.array([2.0, 1.0]), 10.0), [1.5, 7.0], atol=1e-8)
        assert np.allclose(
            mdf(np.array([2.0, 1.0]), 10.0), mdf(np.array([4.0, 2.0]), 20.0), rtol=1e-6
        )

    def test_iuf_values(self, cd):
        iuf = cd.run_transition("t_mdf_to_iuf")
        assert iuf(P11, 2.0) == pytest.approx(1.0, rel=1e-9)
        assert iuf(P11, 4.0) == pytest.approx(2.0, rel=1e-9)
        assert iuf(P11 * 2, 4.0) == pytest.approx(iuf(P11, 2.0), rel=1e-9)

    def test_roy_matches_primal(self, cd):
        roy = cd.run_transition("t_roy")
        ref = cd.canonical_handle("MDF")
        for P, M in [(P11, 2.0), (P14, 8.0), (np.array([0.5, 2.0]), 6.0)]:
            assert np.allclose(roy(P, M), ref(P, M), atol=1e-4)

    def test_roy_quasilinear_analytic(self):
        s = WheelSession("q1+ln(q2)")
        roy = s.run_transition("t_roy")
        assert roy(P11, 5.0)[1] == pytest.approx(1.0, abs=1e-6)

    def test_norm_roy_denormalizes(self, cd):
        nroy = cd.run_transition("t_norm_roy")
        assert np.allclose(nroy(np.array([0.5, 0.5])), [1.0, 1.0], atol=1e-6)
        ref = cd.canonical_handle("MDF")
        P, M = np.array([1.0, 4.0]), 8.0
        assert np.allclose(nroy(P / M), ref(P, M), atol=1e-4)

    def test_ef_iuf_inversion_round_trip(self, cd):
        ef = cd.run_transition("t_iuf_to_ef")
        iuf = cd.canonical_handle("IUF")
        assert ef(P14, 2.0) == pytest.approx(8.0, rel=1e-8)
        rng = np.random.default_rng(11)
        for _ in range(10):
            P = 10.0 ** rng.uniform(-1, 1, 2)
            M = 10.0 ** rng.uniform(0, 2)
            assert ef(P, float(iuf(P, M))) == pytest.approx(M, rel=1e-6)

    def test_ef_to_iuf_inverse(self, cd):
        back = cd.run_transition("t_ef_to_iuf")
        assert back(P11, 2.0) == pytest.approx(1.0, rel=1e-7)

    def test_dual_solve_homogeneity(self, cd):
        hdf = cd.run_transition("t_dual_solve")
        assert np.allclose(hdf(P14, 2.0), [4.0, 1.0], atol=1e-8)
        for t in (0.5, 2.0, 10.0):
            assert np.allclose(hdf(P14 * t, 2.0), hdf(P14, 2.0), rtol=1e-6)

    def test_hdf_to_ef_degree_one(self, cd):
        ef = cd.run_transition("t_hdf_to_ef")
        base = ef(P14, 2.0)
        assert base == pytest.approx(8.0, rel=1e-9)
        for t in (0.5, 2.0, 10.0):
            assert ef(P14 * t, 2.0) == pytest.approx(t * base, rel=1e-6)

    def test_shephard_matches_dual_solve(self, cd):
        shep = cd.run_transition("t_shephard")
        hdf = cd.canonical_handle("HDF")
        for P, u in [(P11, 1.0), (P14, 2.0)]:
            assert np.allclose(shep(P, u), hdf(P, u), atol=1e-4)

    def test_shephard_zero_utility(self, cd):
        shep = cd.run_transition("t_shephard")
        assert np.allclose(shep(P11, 0.0), [0.0, 0.0], atol=1e-9)

    def test_norm_shephard_agrees(self, cd):
        nshep = cd.run_transition("t_norm_shephard")
        hdf = cd.canonical_handle("HDF")
        P, M, u = P14, 8.0, 1.5
        assert np.allclose(nshep(P / M, u), hdf(P, u), atol=1e-4)

    def test_hotelling_wold(self):
        s = WheelSession("q1*q2")
        hw = s.run_transition("t_hotelling_wold")
        assert np.allclose(hw(np.array([1.0, 1.0])), [0.5, 0.5], rtol=1e-12)

    def test_hotelling_wold_euler_normalization(self, cd37):
        hw = cd37.run_transition("t_hotelling_wold")
        rng = np.random.default_rng(5)
        for _ in range(10):
            q = 10.0 ** rng.uniform(-1, 1, 2)
            assert float(hw(q) @ q) == pytest.approx(1.0, rel=1e-12)

    def test_hotelling_wold_at_marshallian_point(self, cd37):
        hw = cd37.canonical_handle("HIDF")
        x = cd37.canonical_handle("MDF")(P11, 10.0)
        assert np.allclose(hw(x), P11 / 10.0, atol=1e-9)

    def test_hidf_inversion_agrees_with_primal(self, cd37):
        inv = cd37.run_transition("t_hidf_to_mdf")
        assert np.allclose(inv(P11, 10.0), [3.0, 7.0], atol=1e-6)

    def test_antonelli_point(self, cd):
        ant = cd.run_transition("t_antonelli")
        assert np.allclose(ant(np.array([1.0, 1.0]), 1.0), [0.5, 0.5], atol=1e-6)

    def test_antonelli_euler(self, cd):
        ant = cd.canonical_handle("AIDF")
        df = cd.canonical_handle("DF")
        q = np.array([2.0, 3.0])
        for u in (1.0, 1.8):
            assert float(ant(q, u) @ q) == pytest.approx(float(df(q, u)), rel=1e-4)

    def test_antonelli_normalized_by_expenditure(self, cd):
        # psi(x^c(P,u), u) = P / E(P,u)
        ant = cd.canonical_handle("AIDF")
        hdf = cd.canonical_handle("HDF")
        ef = cd.canonical_handle("EF")
        P, u = P14, 2.0
        xc = hdf(P, u)
        e = float(ef(P, u))
        assert np.allclose(ant(xc, u), P / e, atol=1e-3)

    def test_aidf_inversion_agrees_with_dual(self, cd):
        inv = cd.run_transition("t_aidf_to_hdf")
        assert np.allclose(inv(P14, 2.0), [4.0, 1.0], atol=1e-4)

    def test_df_definition_and_homogeneity(self, cd):
        df = cd.run_transition("t_duf_to_df")
        assert df(np.array([2.0, 2.0]), 1.0) == pytest.approx(2.0, rel=1e-9)
        rng = np.random.default_rng(2)
        for _ in range(5):
            q = 10.0 ** rng.uniform(-0.5, 0.5, 2)
            u_q = cd.utility.value(q)
            assert df(q, u_q) == pytest.approx(1.0, rel=1e-9)
            for t in (0.5, 2.0, 10.0):
                assert df(q * t, u_q) == pytest.approx(t * df(q, u_q), rel=1e-6)

    def test_df_to_duf_recovers(self, cd):
        rec = cd.run_transition("t_df_to_duf")
        q = np.array([2.0, 2.0])
        assert rec(q) == pytest.approx(cd.utility.value(q), rel=1e-9)

    def test_mdf_to_duf_loop_closure_pointwise(self, cd37):
        rec = cd37.run_transition("t_mdf_to_duf")
        rng = np.random.default_rng(8)
        for _ in range(10):
            q = 10.0 ** rng.uniform(-0.5, 0.5, 2)
            assert rec(q) == pytest.approx(cd37.utility.value(q), rel=1e-3)

    def test_hdf_to_eaf_on_image(self, cd):
        eaf = cd.run_transition("t_hdf_to_eaf")
        q = cd.canonical_handle("HDF")(P14, 2.0)
        assert eaf(P14, q) == pytest.approx(8.0, rel=1e-5)
        # off the demand image it is the plain inner product
        assert eaf(P14, np.array([1.0, 2.0])) == pytest.approx(9.0, rel=1e-9)

    def test_cross_substitutions_agree(self, cd37):
        cross_u = cd37.run_transition("t_iuf_to_mdf_via_hdf")
        cross_m = cd37.run_transition("t_ef_to_hdf_via_mdf")
        mdf = cd37.canonical_handle("MDF")
        hdf = cd37.canonical_handle("HDF")
        iuf = cd37.canonical_handle("IUF")
        rng = np.random.default_rng(21)
        for _ in range(10):
            P = 10.0 ** rng.uniform(-1, 1, 2)
            M = 10.0 ** rng.uniform(0, 2)
            u = float(iuf(P, M))
            assert np.allclose(cross_u(P, M), mdf(P, M), atol=1e-3)
            assert np.allclose(cross_m(P, u), hdf(P, u), atol=1e-3)

    def test_bc_and_eaf_handles(self, cd):
        bc = cd.run_transition("t_budget_constraint")
        eaf = cd.run_transition("t_bc_to_eaf")
        q = np.array([1.0, 1.0])
        assert bc(P11, 2.0, q) == pytest.approx(0.0)
        assert eaf(P14, q) == pytest.approx(5.0)

    def test_roy_degenerate_dv_dm(self):
        s = WheelSession("q1^0.5*q2^0.5")
        roy = s.run_transition("t_roy")
        with pytest.raises(DomainError):
            roy(P11, 0.0)  # dV/dM undefined at zero income


class TestNonconvexBehavior:
    def test_hidf_inversion_flags_mismatch(self):
        s = WheelSession("q1^2+q2^2")
        inv = s.run_transition("t_hidf_to_mdf")
        mdf = s.canonical_handle("MDF")
        P, M = np.array([1.0, 1.0]), 2.0
        try:
            recovered = inv(P, M)
            # unique interior stationary point, not the corner optimum
            assert not np.allclose(recovered, mdf(P, M), atol=1e-3)
        except AmbiguityError:
            pass  # multiple basins is the other acceptable signal

    def test_mdf_inversion_ambiguous_at_interior_bundle(self):
        s = WheelSession("q1^2+q2^2")
        rec = s.run_transition("t_mdf_to_duf")
        with pytest.raises(AmbiguityError):
            rec(np.array([1.0, 1.0]))


class TestDualPairs:
    def test_duf_iuf_recovery(self, cd37):
        assert check_dual_pair_duf_iuf(cd37, np.array([1.0, 1.0])) < 1e-3
        assert check_dual_pair_duf_iuf(cd37, np.array([3.0, 7.0])) < 1e-3

    def test_df_ef_recovery(self, cd):
        assert check_dual_pair_df_ef(cd, np.array([1.0, 1.0]), 1.0) < 1e-3
        assert check_dual_pair_df_ef(cd, np.array([2.0, 2.0]), 1.0) < 1e-3

    def test_duf_iuf_nonconvex_recovers_hull(self):
        s = WheelSession("q1^2+q2^2")
        # concavified value at (1,1) is 4, the original is 2
        assert check_dual_pair_duf_iuf(s, np.array([1.0, 1.0])) > 0.5


class TestPlanner:
    def test_direct_edge(self):
        path = plan_path("DUF", "MDF")
        assert [e.method for e in path] == ["t_primal_solve"]

    def test_duf_to_hdf_short(self):
        path = plan_path("DUF", "HDF")
        assert len(path) <= 4
        assert path[-1].dst == "HDF"

    def test_identity_empty(self):
        assert plan_path("DUF", "DUF") == []

    def test_all_nodes_reachable_from_duf(self):
        for node in NODES:
            path = plan_path("DUF", node)
            assert path == [] or path[-1].dst == node

    def test_deterministic(self):
        a = [e.method for e in plan_path("DUF", "EF")]
        for _ in range(5):
            assert [e.method for e in plan_path("DUF", "EF")] == a

    def test_unreachable_direction(self):
        with pytest.raises(NoPathError):
            plan_path("BC", "DUF")  # nothing derives preferences from BC

    def test_unknown_node(self):
        with pytest.raises(NoPathError):
            plan_path("DUF", "XYZ")


class TestExecutePath:
    def test_trace_values(self):
        s = WheelSession("q1^0.5*q2^0.5")
        path = [e.method for e in plan_path("DUF", "IUF")]
        handle, trace = execute_path(s, path, {"P": P11, "M": 2.0})
        assert handle.node == "IUF"
        assert trace[-1]["value"] == pytest.approx(1.0, rel=1e-9)
        assert handle.provenance == ("t_primal_solve", "t_mdf_to_iuf")

    def test_empty_path_returns_seed(self):
        s = WheelSession("q1*q2")
        handle, trace = execute_path(s, [], {"q": np.array([1.0, 1.0])})
        assert handle.node == "DUF" and trace == []

    def test_full_plan_to_hdf(self):
        s = WheelSession("q1^0.5*q2^0.5")
        handle, trace = execute_path(s, plan_path("DUF", "HDF"), {"P": P11, "u": 1.0})
        assert np.allclose(handle(P11, 1.0), [1.0, 1.0], atol=1e-8)

    def test_invalid_chain_rejected(self):
        s = WheelSession("q1*q2")
        with pytest.raises(NoPathError):
            execute_path(s, ["t_shephard"], {})  # EF not cached yet

    def test_availability_rule_allows_loop_listing(self):
        s = WheelSession("q1^0.5*q2^0.5")
        handle, trace = execute_path(
            s,
            ["t_primal_solve", "t_mdf_to_iuf", "t_mdf_to_duf"],
            {"q": np.array([1.0, 1.0])},
        )
        assert handle.node == "DUF"
        assert trace[-1]["value"] == pytest.approx(1.0, rel=1e-6)


class TestProvenance:
    def test_provenance_chains_are_valid(self, cd37):
        from dualwheel.wheelcore import _TRANSITIONS

        for (node, method), handle in cd37.cache.items():
            if method == "seed":
                continue
            available = {"DUF"}
            for m in handle.provenance:
                src, dst, _ = _TRANSITIONS[m]
                assert src in available
                available.add(dst)
            assert node in available

    def test_cache_keyed_by_method(self, cd37):
        keys = {k for k in cd37.cache if k[0] == "MDF"}
        assert len(keys) >= 2  # several routes to MDF held simultaneously
