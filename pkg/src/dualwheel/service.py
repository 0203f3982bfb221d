"""JSON-over-HTTP service exposing sessions, transitions, verification and
the wheel graph.

Sessions live in memory behind an LRU cap; restarting the service and
replaying a transcript reproduces identical numeric output because every
response funnels through jsonio's 12-significant-digit serializers (shared
with the CLI). Errors use the envelope {"error": {kind, message, position?}}.
"""

from __future__ import annotations

import secrets
import threading
import time
from collections import OrderedDict
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import Response

from . import jsonio, verify, wheelcore
from .errors import DualityError, NoPathError, ParseError
from .numkit import PriceIncome
from .wheelcore import EDGES, NODES, SIGNATURE_ARGS, WheelSession

SESSION_CAP = 256


def graph_payload() -> dict:
    return {
        "nodes": [
            {
                "id": n.id,
                "signature": n.signature,
                "label": n.label,
                "args": list(SIGNATURE_ARGS[n.id]),
            }
            for n in NODES.values()
        ],
        "edges": [
            {
                "from": e.src,
                "to": e.dst,
                "kind": e.kind,
                "method": e.method,
                "bidirectional": e.bidirectional,
                "label": e.label,
                "formula": e.formula,
            }
            for e in EDGES
        ],
        "kinds": ["dual", "inverse", "counterpart", "derivative"],
    }


def _parse_point(raw: dict | None) -> dict:
    point = {}
    if not raw:
        return point
    for key in ("P", "q", "p"):
        if raw.get(key) is not None:
            point[key] = np.asarray(raw[key], dtype=float)
    for key in ("M", "u"):
        if raw.get(key) is not None:
            point[key] = float(raw[key])
    return point


class SessionStore:
    """In-memory LRU session registry; per-session transitions serialize on
    the session's own lock inside WheelSession."""

    def __init__(self, cap: int = SESSION_CAP):
        self.cap = cap
        self._lock = threading.Lock()
        self._items: OrderedDict[str, dict] = OrderedDict()

    def create(self, utility_text: str) -> dict:
        session = WheelSession(utility_text)
        record = {
            "session_id": secrets.token_hex(8),
            "utility_text": utility_text,
            "created_at": time.time(),
            "session": session,
        }
        with self._lock:
            self._items[record["session_id"]] = record
            while len(self._items) > self.cap:
                self._items.popitem(last=False)
        return record

    def get(self, session_id: str) -> dict | None:
        with self._lock:
            record = self._items.get(session_id)
            if record is not None:
                self._items.move_to_end(session_id)
            return record


def _json(payload, status_code: int = 200) -> Response:
    return Response(
        content=jsonio.dumps(payload),
        status_code=status_code,
        media_type="application/json",
    )


def _error(kind: str, message: str, status_code: int, position=None) -> Response:
    body = {"error": {"kind": kind, "message": message}}
    if position is not None:
        body["error"]["position"] = position
    return _json(body, status_code)


def _error_from(exc: Exception, status_code: int = 400) -> Response:
    kind = getattr(exc, "kind", "internal_error")
    position = getattr(exc, "position", None)
    return _error(kind, str(exc), status_code, position)


def create_app(frontend_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="duality wheel service", docs_url=None, redoc_url=None)
    store = SessionStore()

    @app.exception_handler(DualityError)
    async def _duality_error(request: Request, exc: DualityError):
        return _error_from(exc)

    @app.post("/api/session")
    async def create_session(request: Request):
        body = await request.json()
        text = body.get("utility")
        if not isinstance(text, str) or not text.strip():
            return _error("parse_error", "missing 'utility' string", 400, 0)
        try:
            record = store.create(text)
        except (ParseError, DualityError) as exc:
            return _error_from(exc)
        return _json(
            {
                "session_id": record["session_id"],
                "n_goods": record["session"].utility.n_goods,
                "utility": record["utility_text"],
            },
            status_code=201,
        )

    @app.get("/api/graph")
    async def get_graph():
        return _json(graph_payload())

    def _session_or_none(session_id: str):
        record = store.get(session_id)
        return record["session"] if record else None

    @app.post("/api/session/{session_id}/evaluate")
    async def evaluate(session_id: str, request: Request):
        session = _session_or_none(session_id)
        if session is None:
            return _error("no_session", f"unknown session {session_id}", 404)
        body = await request.json()
        node = body.get("node")
        if node not in NODES:
            return _error("no_path_error", f"unknown node {node!r}", 400)
        try:
            point = _parse_point(body.get("point"))
            handle = session.canonical_handle(node)
            args = wheelcore._project_point(handle, point)
            if args is None:
                return _error(
                    "domain_error",
                    f"point is missing fields for {node} "
                    f"(needs {', '.join(handle.signature)})",
                    400,
                )
            value = handle(*args)
        except DualityError as exc:
            return _error_from(exc)
        except (TypeError, ValueError) as exc:
            return _error("parse_error", f"malformed point: {exc}", 400)
        return _json({"node": node, "value": value, "provenance": list(handle.provenance)})

    @app.post("/api/session/{session_id}/transition")
    async def transition(session_id: str, request: Request):
        session = _session_or_none(session_id)
        if session is None:
            return _error("no_session", f"unknown session {session_id}", 404)
        body = await request.json()
        edge = body.get("edge")
        try:
            point = _parse_point(body.get("point"))
            handle = session.run_transition(edge)
            step = {"transition": edge, "node": handle.node, "value": None}
            residual = None
            args = wheelcore._project_point(handle, point)
            if args is not None:
                step["value"] = handle(*args)
                canonical = session.canonical_handle(handle.node)
                if canonical.method != handle.method and handle.variant == "standard":
                    alt = wheelcore._project_point(canonical, point)
                    if alt is not None:
                        ref = canonical(*alt)
                        residual = float(
                            np.max(
                                np.abs(np.atleast_1d(step["value"]) - np.atleast_1d(ref))
                                / np.maximum(1.0, np.abs(np.atleast_1d(ref)))
                            )
                        )
        except DualityError as exc:
            return _error_from(exc)
        except (TypeError, ValueError) as exc:
            return _error("parse_error", f"malformed request: {exc}", 400)
        return _json(
            {
                "edge": edge,
                "node": handle.node,
                "variant": handle.variant,
                "value": step["value"],
                "provenance": list(handle.provenance),
                "residual_vs_canonical": residual,
                "trace": [step],
            }
        )

    @app.post("/api/session/{session_id}/plan")
    async def plan(session_id: str, request: Request):
        session = _session_or_none(session_id)
        if session is None:
            return _error("no_session", f"unknown session {session_id}", 404)
        body = await request.json()
        try:
            path = wheelcore.plan_path(body.get("from"), body.get("to"))
        except NoPathError as exc:
            return _error_from(exc, 400)
        return _json(
            {
                "from": body.get("from"),
                "to": body.get("to"),
                "path": [
                    {"method": e.method, "from": e.src, "to": e.dst, "kind": e.kind}
                    for e in path
                ],
            }
        )

    @app.post("/api/session/{session_id}/verify")
    async def verify_endpoint(session_id: str, request: Request):
        session = _session_or_none(session_id)
        if session is None:
            return _error("no_session", f"unknown session {session_id}", 404)
        body = await request.json()
        samples = int(body.get("samples", 25))
        seed = int(body.get("seed", 42))
        identities = body.get("identities")
        try:
            if identities:
                report = None
                for name in identities:
                    rep = verify.check_identity(session, name, samples, seed)
                    report = rep if report is None else report.merged_with(rep)
            else:
                report = verify.verify_all(session, samples, seed)
        except DualityError as exc:
            return _error_from(exc)
        except ValueError as exc:
            return _error("parse_error", str(exc), 400)
        return _json(jsonio.residual_report_payload(report))

    @app.post("/api/session/{session_id}/slutsky")
    async def slutsky(session_id: str, request: Request):
        session = _session_or_none(session_id)
        if session is None:
            return _error("no_session", f"unknown session {session_id}", 404)
        body = await request.json()
        try:
            pi = PriceIncome(np.asarray(body["P"], dtype=float), float(body["M"]))
            i, j = int(body.get("i", 1)), int(body.get("j", 1))
            if not (1 <= i <= pi.n and 1 <= j <= pi.n):
                return _error("domain_error", "good indices out of range", 400)
            entry = verify.check_slutsky(session, pi, i, j)
        except DualityError as exc:
            return _error_from(exc)
        except (KeyError, TypeError, ValueError) as exc:
            return _error("parse_error", f"malformed request: {exc}", 400)
        return _json(
            {
                "identity": entry.identity,
                "point": entry.point,
                "total": entry.lhs,
                "rhs": entry.rhs,
                "substitution": entry.detail["substitution"],
                "income_term": entry.detail["income_term"],
                "residual": entry.residual,
                "pass": entry.passed,
                "u": entry.detail["u"],
            }
        )

    @app.post("/api/session/{session_id}/demo/nonconvex")
    async def demo_nonconvex(session_id: str):
        session = _session_or_none(session_id)
        if session is None:
            return _error("no_session", f"unknown session {session_id}", 404)
        report = verify.demo_information_loss()
        control = verify.information_loss_report(session)
        return _json(
            {
                "demo": jsonio.info_loss_payload(report),
                "session_control": jsonio.info_loss_payload(control),
            }
        )

    if frontend_dir and Path(frontend_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="ui")

    return app


def serve(port: int = 8080, frontend_dir: str | None = None) -> None:
    """Run the service until interrupted."""
    import uvicorn

    uvicorn.run(create_app(frontend_dir), host="127.0.0.1", port=port, log_level="warning")
