"""Plain-file persistence for logs, sessions, and models.

One JSON or variants document per artifact under a data directory; ids are
opaque tokens embedded in file names.  Everything a session needs to resume
after a restart (transcript, rules, validation history, model iterations,
transport progress) lives in its document.
"""

from __future__ import annotations

import json
import time
import uuid
from dataclasses import dataclass
from pathlib import Path

from .declare import ValidationReport, parse_rule_line
from .event_log import EventLog, format_variants, parse_variants
from .llm_bridge import (ChatTransport, Message, ModelIteration, PromptBundle,
                         QueueTransport, RefinementSession, ScriptedTransport,
                         SessionRule, transport_from_spec)
from .model_io import tree_from_document, tree_to_document


class UnknownArtifact(KeyError):
    pass


@dataclass(frozen=True)
class StoredArtifact:
    id: str
    kind: str  # "log" | "session" | "model"
    created_at: float
    path: str


def _new_id() -> str:
    return uuid.uuid4().hex[:12]


def session_to_document(session: RefinementSession) -> dict:
    return {
        "session_id": session.session_id,
        "alphabet": list(session.alphabet),
        "max_repairs": session.max_repairs,
        "state": session.state,
        "rounds": session.rounds,
        "transcript": [m.to_document() for m in session.transcript],
        "current_rules": [entry.to_document() for entry in session.current_rules],
        "validation_history": [r.to_document() for r in session.validation_history],
        "model_iterations": [
            {"rules": [str(rule) for rule in iteration.rules],
             "sup": iteration.sup,
             "tree": tree_to_document(iteration.tree)}
            for iteration in session.model_iterations
        ],
    }


def session_from_document(doc: dict, transport: ChatTransport,
                          bundle: PromptBundle | None = None) -> RefinementSession:
    session = RefinementSession(
        session_id=doc["session_id"],
        alphabet=tuple(doc["alphabet"]),
        transport=transport,
        bundle=bundle or PromptBundle(),
        max_repairs=doc.get("max_repairs", 3),
        state=doc.get("state", "init"),
        rounds=doc.get("rounds", 0),
    )
    session.transcript = [Message.from_document(m) for m in doc.get("transcript", [])]
    session.current_rules = [
        SessionRule(parse_rule_line(entry["rule"]), entry.get("enabled", True),
                    entry.get("source_round", 0))
        for entry in doc.get("current_rules", [])
    ]
    session.validation_history = [
        ValidationReport.from_document(r) for r in doc.get("validation_history", [])
    ]
    session.model_iterations = [
        ModelIteration(
            tuple(parse_rule_line(text) for text in iteration.get("rules", [])),
            iteration["sup"],
            tree_from_document(iteration["tree"]),
        )
        for iteration in doc.get("model_iterations", [])
    ]
    return session


def transport_state(transport: ChatTransport, spec: dict) -> dict:
    """Fold a transport's progress back into its persisted spec."""
    spec = dict(spec)
    if isinstance(transport, ScriptedTransport):
        spec["position"] = transport.position
    elif isinstance(transport, QueueTransport):
        spec["responses"] = list(transport.responses)
    return spec


def transport_from_state(spec: dict) -> ChatTransport:
    transport = transport_from_spec(spec)
    if isinstance(transport, ScriptedTransport):
        transport.position = spec.get("position", 0)
    return transport


class Store:
    """File-backed storage with one subdirectory per artifact kind."""

    def __init__(self, data_dir: str | Path):
        self.root = Path(data_dir)
        for kind in ("logs", "sessions", "models"):
            (self.root / kind).mkdir(parents=True, exist_ok=True)
        self._idempotency_path = self.root / "idempotency.json"

    # -- logs ---------------------------------------------------------------

    def save_log(self, log: EventLog, name: str = "log") -> str:
        log_id = _new_id()
        (self.root / "logs" / f"{log_id}.variants").write_text(
            format_variants(log), encoding="utf-8")
        meta = {"id": log_id, "kind": "log", "name": name,
                "created_at": time.time(), "activities": sorted(log.alphabet),
                "total_traces": log.total_traces}
        (self.root / "logs" / f"{log_id}.json").write_text(
            json.dumps(meta, indent=2), encoding="utf-8")
        return log_id

    def load_log(self, log_id: str) -> EventLog:
        path = self.root / "logs" / f"{log_id}.variants"
        if not path.exists():
            raise UnknownArtifact(log_id)
        return parse_variants(path.read_text(encoding="utf-8"))

    def log_meta(self, log_id: str) -> dict:
        path = self.root / "logs" / f"{log_id}.json"
        if not path.exists():
            raise UnknownArtifact(log_id)
        return json.loads(path.read_text(encoding="utf-8"))

    def list_logs(self) -> list[dict]:
        metas = [json.loads(p.read_text(encoding="utf-8"))
                 for p in sorted((self.root / "logs").glob("*.json"))]
        return sorted(metas, key=lambda m: m["created_at"])

    # -- sessions -------------------------------------------------------------

    def new_session_id(self) -> str:
        return _new_id()

    def save_session(self, session: RefinementSession, meta: dict) -> None:
        doc = {"meta": meta, "session": session_to_document(session)}
        path = self.root / "sessions" / f"{session.session_id}.json"
        path.write_text(json.dumps(doc, indent=2), encoding="utf-8")

    def load_session(self, session_id: str) -> tuple[RefinementSession, dict]:
        path = self.root / "sessions" / f"{session_id}.json"
        if not path.exists():
            raise UnknownArtifact(session_id)
        doc = json.loads(path.read_text(encoding="utf-8"))
        meta = doc["meta"]
        transport = transport_from_state(meta["transport"])
        session = session_from_document(doc["session"], transport)
        return session, meta

    def list_sessions(self) -> list[str]:
        return sorted(p.stem for p in (self.root / "sessions").glob("*.json"))

    # -- idempotency tokens ----------------------------------------------------

    def idempotent_response(self, token: str) -> dict | None:
        if not self._idempotency_path.exists():
            return None
        table = json.loads(self._idempotency_path.read_text(encoding="utf-8"))
        return table.get(token)

    def remember_response(self, token: str, response: dict) -> None:
        table = {}
        if self._idempotency_path.exists():
            table = json.loads(self._idempotency_path.read_text(encoding="utf-8"))
        table[token] = response
        self._idempotency_path.write_text(json.dumps(table, indent=2),
                                          encoding="utf-8")
