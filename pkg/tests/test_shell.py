import io
import json
from contextlib import redirect_stdout

import pytest
from fastapi.testclient import TestClient

from dualwheel.cli import main, parse_point
from dualwheel.service import create_app, graph_payload


def run_cli(*argv):
    buf = io.StringIO()
    with redirect_stdout(buf):
        code = main(list(argv))
    return code, buf.getvalue()


class TestPointParsing:
    def test_full_point(self):
        pt = parse_point("P=1,1;u=1")
        assert list(pt["P"]) == [1.0, 1.0] and pt["u"] == 1.0

    def test_unknown_field(self):
        with pytest.raises(ValueError):
            parse_point("z=3")


class TestCli:
    def test_parse_text(self):
        code, out = run_cli("parse", "--utility", "(q1)*q2")
        assert code == 0 and "q1*q2" in out

    def test_parse_error_exit_code(self):
        code, _ = run_cli("parse", "--utility", "q1 ** q2")
        assert code == 1

    def test_solve_primal(self):
        code, out = run_cli(
            "solve", "--utility", "q1*q2", "--prices", "1,1", "--income", "2",
            "--format", "json",
        )
        assert code == 0
        payload = json.loads(out)
        assert payload["bundle"] == [1.0, 1.0]

    def test_solve_dual(self):
        code, out = run_cli(
            "solve", "--utility", "q1^0.5*q2^0.5", "--problem", "dual",
            "--prices", "1,4", "--ulevel", "2", "--format", "json",
        )
        payload = json.loads(out)
        assert code == 0 and payload["expenditure"] == pytest.approx(8.0)

    def test_derive(self):
        code, out = run_cli(
            "derive", "--utility", "q1*q2", "--from", "DUF", "--to", "HDF",
            "--at", "P=1,1;u=1", "--format", "json",
        )
        assert code == 0
        payload = json.loads(out)
        assert payload["trace"][-1]["node"] == "HDF"
        assert payload["trace"][-1]["value"] == pytest.approx([1.0, 1.0], abs=1e-6)

    def test_verify_single_identity(self):
        code, out = run_cli(
            "verify", "--utility", "q1^0.5*q2^0.5", "--identity", "hotelling_wold",
            "--samples", "5", "--seed", "42", "--format", "json",
        )
        assert code == 0
        payload = json.loads(out)
        assert payload["failures"] == 0
        entry = payload["entries"][0]
        assert set(entry) == {"identity", "point", "lhs", "rhs", "residual", "pass"}

    def test_verify_family_spec(self):
        code, out = run_cli(
            "verify", "--family", "cobb_douglas:a1=0.3", "--identity", "duf_df_inverse",
            "--samples", "4", "--format", "json",
        )
        assert code == 0 and json.loads(out)["failures"] == 0

    def test_demo_nonconvex(self):
        code, out = run_cli("demo", "nonconvex", "--format", "json")
        assert code == 0
        payload = json.loads(out)
        assert payload["convexified"] is True
        assert payload["ranking_flips"]

    def test_usage_error_exit_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["solve", "--utility", "q1*q2"])  # missing --prices
        assert exc.value.code == 2


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


@pytest.fixture(scope="module")
def session_id(client):
    r = client.post("/api/session", json={"utility": "q1*q2"})
    assert r.status_code == 201
    return r.json()["session_id"]


class TestService:
    def test_create_session_contract(self, client):
        r = client.post("/api/session", json={"utility": "q1*q2"})
        assert r.status_code == 201
        body = r.json()
        assert body["n_goods"] == 2 and "session_id" in body

    def test_graph_census(self, client):
        g = client.get("/api/graph").json()
        assert len(g["nodes"]) == 10
        assert len(g["edges"]) >= 16
        assert set(g["kinds"]) == {"dual", "inverse", "counterpart", "derivative"}
        for edge in g["edges"]:
            assert edge["kind"] in g["kinds"]

    def test_transition_roy(self, client, session_id):
        r = client.post(
            f"/api/session/{session_id}/transition",
            json={"edge": "t_roy", "point": {"P": [1, 1], "M": 2}},
        )
        assert r.status_code == 200
        body = r.json()
        assert body["value"] == pytest.approx([1.0, 1.0], abs=1e-4)
        assert body["residual_vs_canonical"] < 1e-4
        assert body["trace"][0]["transition"] == "t_roy"

    def test_evaluate(self, client, session_id):
        r = client.post(
            f"/api/session/{session_id}/evaluate",
            json={"node": "EF", "point": {"P": [1, 1], "u": 1}},
        )
        assert r.status_code == 200
        assert r.json()["value"] == pytest.approx(2.0, rel=1e-6)

    def test_plan(self, client, session_id):
        r = client.post(
            f"/api/session/{session_id}/plan", json={"from": "DUF", "to": "HDF"}
        )
        path = r.json()["path"]
        assert 1 <= len(path) <= 4
        assert path[-1]["to"] == "HDF"

    def test_slutsky_endpoint(self, client, session_id):
        r = client.post(
            f"/api/session/{session_id}/slutsky",
            json={"P": [1, 1], "M": 2, "i": 1, "j": 1},
        )
        body = r.json()
        assert body["pass"] is True
        assert body["total"] == pytest.approx(
            body["substitution"] - body["income_term"], abs=1e-3
        )

    def test_verify_endpoint(self, client, session_id):
        r = client.post(
            f"/api/session/{session_id}/verify",
            json={"identities": ["hotelling_wold"], "samples": 4, "seed": 42},
        )
        assert r.status_code == 200
        assert r.json()["failures"] == 0

    def test_malformed_point_is_400(self, client, session_id):
        r = client.post(
            f"/api/session/{session_id}/evaluate",
            json={"node": "IUF", "point": {"P": "bogus"}},
        )
        assert r.status_code == 400
        assert r.json()["error"]["kind"] == "parse_error"

    def test_parse_error_envelope_has_position(self, client):
        r = client.post("/api/session", json={"utility": "q1 ** q2"})
        assert r.status_code == 400
        err = r.json()["error"]
        assert err["kind"] == "parse_error" and err["position"] == 3

    def test_unknown_session_404(self, client):
        r = client.post("/api/session/nope/plan", json={"from": "DUF", "to": "MDF"})
        assert r.status_code == 404


class TestDeterminism:
    TRANSCRIPT = [
        ("transition", {"edge": "t_primal_solve", "point": {"P": [1, 2], "M": 7}}),
        ("transition", {"edge": "t_roy", "point": {"P": [1, 2], "M": 7}}),
        ("evaluate", {"node": "EF", "point": {"P": [1, 2], "u": 1.3}}),
        ("slutsky", {"P": [1, 2], "M": 7, "i": 1, "j": 2}),
        ("verify", {"identities": ["roy"], "samples": 3, "seed": 42}),
    ]

    def _replay(self):
        client = TestClient(create_app())  # fresh service instance
        sid = client.post("/api/session", json={"utility": "q1^0.3*q2^0.7"}).json()[
            "session_id"
        ]
        out = []
        for endpoint, payload in self.TRANSCRIPT:
            r = client.post(f"/api/session/{sid}/{endpoint}", json=payload)
            assert r.status_code == 200
            out.append(r.text)
        return out

    def test_restart_replay_byte_identical(self):
        assert self._replay() == self._replay()

    def test_cli_and_service_share_serialization(self):
        code, out = run_cli(
            "verify", "--utility", "q1^0.3*q2^0.7", "--identity", "roy",
            "--samples", "3", "--seed", "42", "--format", "json",
        )
        cli_payload = json.loads(out)
        client = TestClient(create_app())
        sid = client.post("/api/session", json={"utility": "q1^0.3*q2^0.7"}).json()[
            "session_id"
        ]
        svc_payload = client.post(
            f"/api/session/{sid}/verify",
            json={"identities": ["roy"], "samples": 3, "seed": 42},
        ).json()
        assert cli_payload["entries"] == svc_payload["entries"]


def test_graph_payload_matches_edges():
    payload = graph_payload()
    from dualwheel.wheelcore import EDGES, NODES

    assert len(payload["nodes"]) == len(NODES)
    assert len(payload["edges"]) == len(EDGES)
