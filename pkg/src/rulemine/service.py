"""HTTP service exposing logs, refinement sessions, and discovery to the UI.

State is persisted through :mod:`rulemine.store` after every mutation, so a
restarted process serves the same sessions.  Turns within one session are
serialized by a per-session lock; distinct sessions are independent.
Mutating endpoints honour an ``Idempotency-Key`` header: a retried request
with the same key returns the stored response without re-executing.
"""

from __future__ import annotations

import threading
from typing import Callable

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse

from .declare import (RuleError, confidence, parse_rule_line, validate_rules)
from .discovery import DiscoveryParams
from .event_log import LogError, parse_csv_log, parse_variants
from .llm_bridge import (ChatTransport, ProposalOutcome, RefinementSession,
                         RepairExhausted, SessionRule, SessionStateError,
                         TransportFailure)
from .model_io import net_to_dot, to_workflow_net, tree_to_document
from .pipeline import run_discovery
from .store import Store, UnknownArtifact, transport_from_state, transport_state


class _ValidationFailed(Exception):
    def __init__(self, report):
        super().__init__("rule validation failed")
        self.report = report


def _outcome_document(outcome: ProposalOutcome) -> dict:
    if outcome.questions is not None:
        return {"questions": outcome.questions}
    return {
        "rules": [str(rule) for rule in (outcome.rules or [])],
        "report": outcome.report.to_document() if outcome.report else None,
    }


def create_app(data_dir: str, transport_factory: Callable[[dict], ChatTransport] | None = None) -> FastAPI:
    """Build the service around a data directory.

    ``transport_factory`` maps a persisted transport spec to a live transport;
    the default reconstructs scripted/queue/http transports from the spec.
    """
    store = Store(data_dir)
    make_transport = transport_factory or transport_from_state
    app = FastAPI(title="rulemine")
    locks: dict[str, threading.Lock] = {}
    locks_guard = threading.Lock()

    def session_lock(session_id: str) -> threading.Lock:
        with locks_guard:
            if session_id not in locks:
                locks[session_id] = threading.Lock()
            return locks[session_id]

    # -- error mapping -------------------------------------------------------

    @app.exception_handler(UnknownArtifact)
    def _unknown(_, exc: UnknownArtifact):
        return JSONResponse({"error": "not-found", "detail": str(exc)}, status_code=404)

    @app.exception_handler(LogError)
    def _log_error(_, exc: LogError):
        return JSONResponse({"error": type(exc).__name__, "detail": str(exc)},
                            status_code=400)

    @app.exception_handler(RuleError)
    def _rule_error(_, exc: RuleError):
        return JSONResponse({"error": exc.kind, "detail": str(exc)}, status_code=400)

    @app.exception_handler(SessionStateError)
    def _state_error(_, exc: SessionStateError):
        return JSONResponse({"error": "session-state", "detail": str(exc)},
                            status_code=409)

    @app.exception_handler(TransportFailure)
    def _transport_error(_, exc: TransportFailure):
        return JSONResponse({"error": "transport", "detail": str(exc)}, status_code=502)

    @app.exception_handler(RepairExhausted)
    def _repair_error(_, exc: RepairExhausted):
        return JSONResponse(
            {"error": "repair-exhausted", "detail": str(exc),
             "report": exc.report.to_document()},
            status_code=502)

    # -- idempotency ----------------------------------------------------------

    def idempotent(request: Request, compute: Callable[[], dict],
                   status_code: int = 200) -> Response:
        token = request.headers.get("Idempotency-Key")
        if token:
            key = f"{request.method} {request.url.path} {token}"
            stored = store.idempotent_response(key)
            if stored is not None:
                return JSONResponse(stored["body"], status_code=stored["status"])
        body = compute()
        if token:
            store.remember_response(key, {"status": status_code, "body": body})
        return JSONResponse(body, status_code=status_code)

    # -- logs ------------------------------------------------------------------

    @app.post("/logs")
    def upload_log(payload: dict, request: Request):
        def compute() -> dict:
            content = payload.get("content", "")
            fmt = payload.get("format", "variants")
            log = parse_csv_log(content) if fmt == "csv" else parse_variants(content)
            log_id = store.save_log(log, payload.get("name", "log"))
            return {"id": log_id, "activities": sorted(log.alphabet),
                    "total_traces": log.total_traces}
        return idempotent(request, compute, status_code=201)

    @app.get("/logs")
    def list_logs():
        return {"logs": store.list_logs()}

    @app.get("/logs/{log_id}/activities")
    def log_activities(log_id: str):
        return {"activities": store.log_meta(log_id)["activities"]}

    # -- sessions ----------------------------------------------------------------

    def load(session_id: str) -> tuple[RefinementSession, dict]:
        session, meta = store.load_session(session_id)
        session.transport = make_transport(meta["transport"])
        return session, meta

    def persist(session: RefinementSession, meta: dict) -> None:
        meta["transport"] = transport_state(session.transport, meta["transport"])
        store.save_session(session, meta)

    def rule_rows(session: RefinementSession, meta: dict) -> list[dict]:
        log = store.load_log(meta["log_id"])
        rows = []
        for index, entry in enumerate(session.current_rules):
            row = entry.to_document()
            row["index"] = index
            row["confidence"] = (confidence(entry.rule, log)
                                 if log.total_traces else None)
            rows.append(row)
        return rows

    def session_view(session: RefinementSession, meta: dict) -> dict:
        return {
            "id": session.session_id,
            "log_id": meta["log_id"],
            "sup": meta["sup"],
            "state": session.state,
            "rounds": session.rounds,
            "rules": rule_rows(session, meta),
            "iterations": len(session.model_iterations),
        }

    @app.post("/sessions")
    def create_session(payload: dict, request: Request):
        def compute() -> dict:
            log_id = payload["log_id"]
            meta = {
                "log_id": log_id,
                "sup": float(payload.get("sup", 0.2)),
                "transport": payload.get("transport", {"kind": "http"}),
            }
            log = store.load_log(log_id)
            session = RefinementSession(
                session_id=store.new_session_id(),
                alphabet=tuple(sorted(log.alphabet)),
                transport=make_transport(meta["transport"]),
                max_repairs=int(payload.get("max_repairs", 3)),
            )
            persist(session, meta)
            return {"id": session.session_id}
        return idempotent(request, compute, status_code=201)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        session, meta = load(session_id)
        return session_view(session, meta)

    def run_turn(session_id: str, turn) -> dict:
        with session_lock(session_id):
            session, meta = load(session_id)
            outcome = turn(session)
            persist(session, meta)
            return _outcome_document(outcome)

    @app.post("/sessions/{session_id}/context")
    def post_context(session_id: str, payload: dict, request: Request):
        return idempotent(request, lambda: run_turn(
            session_id, lambda s: s.propose_rules(payload["text"])))

    @app.post("/sessions/{session_id}/answers")
    def post_answers(session_id: str, payload: dict, request: Request):
        return idempotent(request, lambda: run_turn(
            session_id, lambda s: s.propose_rules(payload["text"])))

    @app.post("/sessions/{session_id}/feedback")
    def post_feedback(session_id: str, payload: dict, request: Request):
        return idempotent(request, lambda: run_turn(
            session_id, lambda s: s.integrate_feedback(payload["text"])))

    @app.get("/sessions/{session_id}/rules")
    def get_rules(session_id: str):
        session, meta = load(session_id)
        return {"rules": rule_rows(session, meta)}

    @app.put("/sessions/{session_id}/rules")
    def put_rules(session_id: str, payload: dict, request: Request):
        def compute() -> dict:
            with session_lock(session_id):
                session, meta = load(session_id)
                edited: list[SessionRule] = []
                for entry in payload.get("rules", []):
                    rule = parse_rule_line(entry["text"])
                    previous = next(
                        (r for r in session.current_rules if r.rule == rule), None)
                    source = previous.source_round if previous else session.rounds
                    edited.append(SessionRule(rule, bool(entry.get("enabled", True)),
                                              source))
                report = validate_rules([e.rule for e in edited], session.alphabet)
                if not report.verdict:
                    raise _ValidationFailed(report)
                session.current_rules = edited
                session.validation_history.append(report)
                persist(session, meta)
                return {"rules": rule_rows(session, meta),
                        "report": report.to_document()}
        return idempotent(request, compute)

    @app.post("/sessions/{session_id}/discover")
    def post_discover(session_id: str, payload: dict, request: Request):
        def compute() -> dict:
            with session_lock(session_id):
                session, meta = load(session_id)
                sup = float(payload.get("sup", meta["sup"]))
                meta["sup"] = sup
                log = store.load_log(meta["log_id"])
                rules = session.enabled_rules()
                run = run_discovery(log, rules, DiscoveryParams(sup=sup))
                session.add_model_iteration(rules, sup, run.tree)
                persist(session, meta)
                return {
                    "iteration": len(session.model_iterations) - 1,
                    "sup": sup,
                    "tree_text": run.tree_text,
                    "dot": run.export("graph-dot"),
                    "verdicts": run.verdict_documents(),
                }
        return idempotent(request, compute)

    @app.get("/sessions/{session_id}/model")
    def get_model(session_id: str, iteration: int = -1):
        session, _ = load(session_id)
        if not session.model_iterations:
            raise UnknownArtifact("no model discovered yet")
        try:
            snapshot = session.model_iterations[iteration]
            index = (iteration if iteration >= 0
                     else len(session.model_iterations) + iteration)
        except IndexError:
            raise UnknownArtifact(f"iteration {iteration}") from None
        return {
            "iteration": index,
            "sup": snapshot.sup,
            "rules": [str(rule) for rule in snapshot.rules],
            "tree": tree_to_document(snapshot.tree),
            "tree_text": str(snapshot.tree),
            "dot": net_to_dot(to_workflow_net(snapshot.tree)),
        }

    @app.get("/sessions/{session_id}/transcript")
    def get_transcript(session_id: str):
        session, _ = load(session_id)
        return {"transcript": [m.to_document() for m in session.transcript]}

    @app.get("/sessions/{session_id}/validation")
    def get_validation(session_id: str):
        session, _ = load(session_id)
        return {"reports": [r.to_document() for r in session.validation_history]}

    @app.exception_handler(_ValidationFailed)
    def _validation_failed(_, exc: _ValidationFailed):
        return JSONResponse({"error": "validation",
                             "report": exc.report.to_document()}, status_code=422)

    return app
