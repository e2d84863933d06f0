"""Expert/LLM dialogue for rule extraction, with validation and repair.

The pipeline assembles a task prompt (role, template catalog, output
contract, few-shot examples, the log's activity list), sends expert text over
a provider-agnostic chat transport, extracts tagged rule/question blocks from
the reply, validates parsed rules against the log alphabet, and loops with
corrective prompts while validation fails.  A scripted transport replays
recorded conversations so nothing here ever needs a live provider.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

from .declare import (DeclareRule, RuleError, TEMPLATES, TEMPLATE_MEANING,
                      ValidationItem, ValidationReport, parse_rules,
                      report_from_parse_error, validate_rules)
from .tree import ProcessTree


class TransportFailure(Exception):
    pass


class UnbalancedTags(Exception):
    def __init__(self, kind: str):
        super().__init__(f"unbalanced [{kind.upper()}] tags")
        self.kind = kind


class MultipleBlocks(Exception):
    def __init__(self, kind: str):
        super().__init__(f"more than one [{kind.upper()}] block")
        self.kind = kind


class RepairExhausted(Exception):
    def __init__(self, report: ValidationReport, attempts: int):
        super().__init__(f"rules still invalid after {attempts} repair attempts")
        self.report = report
        self.attempts = attempts


class SessionStateError(Exception):
    pass


# ---------------------------------------------------------------------------
# Messages and prompt assembly


@dataclass(frozen=True)
class Message:
    speaker: str  # "expert" | "assistant" | "system"
    content: str

    def to_document(self) -> dict:
        return {"speaker": self.speaker, "content": self.content}

    @staticmethod
    def from_document(doc: dict) -> "Message":
        return Message(doc["speaker"], doc["content"])


DEFAULT_ROLE = (
    "You translate process knowledge written in natural language into "
    "declarative constraints for a process discovery tool. You sit between a "
    "domain expert and the discovery algorithm: the expert describes how the "
    "process should behave, and you answer with constraints over the recorded "
    "activity labels."
)

DEFAULT_OUTPUT_CONTRACT = (
    "Write constraints between [RULES] and [/RULES] markers, one constraint "
    "per line, as template(activity) or template(activity1, activity2), with "
    "no additional text inside the block. Use activity labels exactly as "
    "listed. If anything is unclear, do not guess: put your questions between "
    "[QUESTIONS] and [/QUESTIONS] markers instead, one per line."
)

DEFAULT_NEGATIVE_INSTRUCTIONS = (
    "Avoid these common mistakes: inventing activity labels that are not in "
    "the list; using templates outside the catalogue; putting two constraints "
    "on one line; adding prose inside the [RULES] block."
)

DEFAULT_FEW_SHOTS: tuple[tuple[str, tuple[str, ...]], ...] = (
    (
        "Every order is eventually archived, and an order can be cancelled "
        "or invoiced but never both.",
        ("existence(Archive Order)", "not-co-existence(Cancel Order, Send Invoice)"),
    ),
    (
        "A parcel is weighed before it is shipped, and shipping happens at "
        "most once.",
        ("precedence(Weigh Parcel, Ship Parcel)", "at-most(Ship Parcel)"),
    ),
)

DEFAULT_NEGATIVE_EXAMPLES: tuple[tuple[str, str], ...] = (
    ("after(Weigh Parcel, Ship Parcel)", "not a supported template name"),
    ("response(Ship Parcel)", "response relates two activities, one given"),
)


@dataclass(frozen=True)
class PromptBundle:
    """Everything injected into the task-definition prompt."""

    role_statement: str = DEFAULT_ROLE
    template_catalog: tuple[tuple[str, int, str], ...] = tuple(
        (name, TEMPLATES[name], TEMPLATE_MEANING[name]) for name in TEMPLATES
    )
    output_contract: str = DEFAULT_OUTPUT_CONTRACT
    negative_instructions: str = DEFAULT_NEGATIVE_INSTRUCTIONS
    few_shots: tuple[tuple[str, tuple[str, ...]], ...] = DEFAULT_FEW_SHOTS
    negative_examples: tuple[tuple[str, str], ...] = DEFAULT_NEGATIVE_EXAMPLES
    activity_list: tuple[str, ...] = ()

    def with_activities(self, activities: Sequence[str]) -> "PromptBundle":
        return replace(self, activity_list=tuple(activities))


def build_task_prompt(activities: Sequence[str] | None,
                      bundle: PromptBundle | None = None) -> list[Message]:
    """Render the task-definition prompt as an ordered message list."""
    bundle = bundle or PromptBundle()
    if activities:
        bundle = bundle.with_activities(activities)

    lines = [bundle.role_statement, "", "Supported constraint templates:"]
    for name, arity, meaning in bundle.template_catalog:
        args = "a" if arity == 1 else "a, b"
        lines.append(f"- {name}({args}): {meaning}")
    lines += ["", bundle.output_contract, "", bundle.negative_instructions]
    if bundle.negative_examples:
        lines.append("Examples of bad output:")
        for bad, why in bundle.negative_examples:
            lines.append(f"- {bad}  ({why})")
    if bundle.activity_list:
        lines += ["", "Recorded activity labels:"]
        lines += [f"- {label}" for label in bundle.activity_list]
    else:
        lines += ["", "No activity list was provided; the expert will supply "
                      "the labels in their description."]

    messages = [Message("system", "\n".join(lines))]
    for description, rules in bundle.few_shots:
        messages.append(Message("expert", description))
        body = "\n".join(rules)
        messages.append(Message("assistant", f"[RULES]\n{body}\n[/RULES]"))
    return messages


# ---------------------------------------------------------------------------
# Tagged-block extraction


@dataclass(frozen=True)
class TaggedBlocks:
    rules_block: str | None
    questions_block: str | None


def _extract_block(text: str, kind: str) -> str | None:
    open_tag, close_tag = f"[{kind}]", f"[/{kind}]"
    opens = text.count(open_tag)
    closes = text.count(close_tag)
    if opens == 0 and closes == 0:
        return None
    if opens != closes:
        raise UnbalancedTags(kind.lower())
    if opens > 1:
        raise MultipleBlocks(kind.lower())
    start = text.index(open_tag) + len(open_tag)
    end = text.index(close_tag)
    if end < start:
        raise UnbalancedTags(kind.lower())
    return text[start:end].strip("\n")


def extract_tagged(text: str) -> TaggedBlocks:
    """Pull the rule and question blocks out of an assistant reply.

    Surrounding prose is tolerated; absent blocks come back as None.
    """
    return TaggedBlocks(
        rules_block=_extract_block(text, "RULES"),
        questions_block=_extract_block(text, "QUESTIONS"),
    )


def parse_questions(block: str) -> list[str]:
    questions = []
    for line in block.splitlines():
        line = line.strip()
        line = re.sub(r"^(?:[-*]|\(?\d+[.)]?|Q\d+[:.]?)\s*", "", line)
        if line:
            questions.append(line)
    return questions


# ---------------------------------------------------------------------------
# Transports


class ChatTransport:
    """Stateless chat backend: the full message history goes with every call."""

    def send(self, messages: Sequence[Message]) -> str:
        raise NotImplementedError


def request_digest(messages: Sequence[Message]) -> str:
    payload = json.dumps([m.to_document() for m in messages],
                         sort_keys=True, ensure_ascii=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class HttpTransport(ChatTransport):
    """Generic chat-completion endpoint, configured from the environment.

    Reads RULEMINE_CHAT_ENDPOINT, RULEMINE_CHAT_MODEL and
    RULEMINE_CHAT_API_KEY; the request body is the ordered message list with
    conversational roles and temperature pinned to 0.
    """

    ROLE_FOR_SPEAKER = {"expert": "user", "assistant": "assistant", "system": "system"}

    def __init__(self, endpoint: str | None = None, model: str | None = None,
                 api_key: str | None = None, timeout: float = 60.0):
        self.endpoint = endpoint or os.environ.get("RULEMINE_CHAT_ENDPOINT", "")
        self.model = model or os.environ.get("RULEMINE_CHAT_MODEL", "")
        self.api_key = api_key or os.environ.get("RULEMINE_CHAT_API_KEY", "")
        self.timeout = timeout
        if not self.endpoint:
            raise TransportFailure("no chat endpoint configured")

    def send(self, messages: Sequence[Message]) -> str:
        import requests

        body = {
            "model": self.model,
            "temperature": 0,
            "messages": [
                {"role": self.ROLE_FOR_SPEAKER[m.speaker], "content": m.content}
                for m in messages
            ],
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            response = requests.post(self.endpoint, json=body, headers=headers,
                                     timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportFailure(f"chat endpoint unreachable: {exc}") from exc
        if response.status_code != 200:
            raise TransportFailure(f"chat endpoint returned {response.status_code}")
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (ValueError, LookupError, TypeError) as exc:
            raise TransportFailure(f"malformed chat response: {exc}") from exc


class QueueTransport(ChatTransport):
    """Canned responses in order; raises once exhausted."""

    def __init__(self, responses: Sequence[str]):
        self.responses = list(responses)
        self.sent: list[Sequence[Message]] = []

    def send(self, messages: Sequence[Message]) -> str:
        self.sent.append(list(messages))
        if not self.responses:
            raise TransportFailure("queue transport exhausted")
        return self.responses.pop(0)


class ScriptedTransport(ChatTransport):
    """Replays a recorded conversation, verifying each request digest.

    The transcript file holds one JSON record per line: {"digest": ...,
    "response": ...}, in call order.  A digest mismatch means the replayed
    session diverged from the recorded one and is reported as a transport
    failure.
    """

    def __init__(self, records: Sequence[tuple[str, str]]):
        self.records = list(records)
        self.position = 0

    @classmethod
    def from_file(cls, path: str) -> "ScriptedTransport":
        records = []
        with open(path, encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if not line:
                    continue
                doc = json.loads(line)
                records.append((doc["digest"], doc["response"]))
        return cls(records)

    def send(self, messages: Sequence[Message]) -> str:
        if self.position >= len(self.records):
            raise TransportFailure("scripted transcript exhausted")
        digest, response = self.records[self.position]
        actual = request_digest(messages)
        if digest != "*" and digest != actual:
            raise TransportFailure(
                f"request {self.position} diverged from the recorded transcript "
                f"(expected digest {digest[:12]}..., got {actual[:12]}...)")
        self.position += 1
        return response


class RecordingTransport(ChatTransport):
    """Wraps another transport and records (digest, response) pairs."""

    def __init__(self, inner: ChatTransport):
        self.inner = inner
        self.records: list[tuple[str, str]] = []

    def send(self, messages: Sequence[Message]) -> str:
        digest = request_digest(messages)
        response = self.inner.send(messages)
        self.records.append((digest, response))
        return response

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            for digest, response in self.records:
                handle.write(json.dumps({"digest": digest, "response": response},
                                        ensure_ascii=True) + "\n")


def transport_from_spec(spec: dict) -> ChatTransport:
    """Build a transport from a persisted description."""
    kind = spec.get("kind")
    if kind == "scripted":
        return ScriptedTransport.from_file(spec["path"])
    if kind == "queue":
        return QueueTransport(spec.get("responses", []))
    if kind == "http":
        return HttpTransport(spec.get("endpoint"), spec.get("model"))
    raise ValueError(f"unknown transport kind {kind!r}")


# ---------------------------------------------------------------------------
# Refinement sessions


@dataclass
class SessionRule:
    rule: DeclareRule
    enabled: bool = True
    source_round: int = 0

    def to_document(self) -> dict:
        return {"rule": str(self.rule), "template": self.rule.template,
                "args": list(self.rule.args), "enabled": self.enabled,
                "source_round": self.source_round}


@dataclass
class ModelIteration:
    rules: tuple[DeclareRule, ...]
    sup: float
    tree: ProcessTree


@dataclass
class ProposalOutcome:
    questions: list[str] | None = None
    rules: list[DeclareRule] | None = None
    report: ValidationReport | None = None


PROPOSAL_STATES = ("init", "context-given", "awaiting-answers", "repairing")


@dataclass
class RefinementSession:
    """State of one expert/LLM refinement dialogue."""

    session_id: str
    alphabet: tuple[str, ...]
    transport: ChatTransport
    bundle: PromptBundle = field(default_factory=PromptBundle)
    max_repairs: int = 3
    state: str = "init"
    rounds: int = 0
    transcript: list[Message] = field(default_factory=list)
    current_rules: list[SessionRule] = field(default_factory=list)
    validation_history: list[ValidationReport] = field(default_factory=list)
    model_iterations: list[ModelIteration] = field(default_factory=list)

    # -- helpers ------------------------------------------------------------

    def enabled_rules(self) -> list[DeclareRule]:
        return [entry.rule for entry in self.current_rules if entry.enabled]

    def preamble(self) -> list[Message]:
        return build_task_prompt(sorted(self.alphabet), self.bundle)

    def _call(self) -> str:
        reply = self.transport.send(self.preamble() + self.transcript)
        self.transcript.append(Message("assistant", reply))
        return reply

    def _snapshot(self) -> tuple:
        return (self.state, self.rounds, len(self.transcript),
                list(self.current_rules), len(self.validation_history))

    def _restore(self, snapshot: tuple) -> None:
        state, rounds, transcript_len, rules, history_len = snapshot
        self.state = state
        self.rounds = rounds
        del self.transcript[transcript_len:]
        self.current_rules = rules
        del self.validation_history[history_len:]

    def _parse_and_validate(self, reply: str) -> tuple[list[DeclareRule] | None, ValidationReport]:
        try:
            blocks = extract_tagged(reply)
        except (UnbalancedTags, MultipleBlocks) as exc:
            return None, ValidationReport((ValidationItem(
                0, "error", type(exc).__name__, str(exc)),))
        if blocks.rules_block is None:
            return None, ValidationReport((ValidationItem(
                0, "error", "MissingBlock",
                "the reply contains no [RULES] block"),))
        try:
            rules = parse_rules(blocks.rules_block)
        except RuleError as exc:
            return None, report_from_parse_error(exc)
        return rules, validate_rules(rules, self.alphabet)

    def _commit(self, rules: Sequence[DeclareRule], report: ValidationReport,
                extend: bool) -> None:
        self.rounds += 1
        if extend:
            known = {entry.rule for entry in self.current_rules}
            for rule in rules:
                if rule not in known:
                    self.current_rules.append(SessionRule(rule, True, self.rounds))
                    known.add(rule)
        else:
            self.current_rules = [SessionRule(rule, True, self.rounds)
                                  for rule in dict.fromkeys(rules)]
        self.validation_history.append(report)
        self.state = "validated"

    # -- operations ----------------------------------------------------------

    def propose_rules(self, expert_text: str) -> ProposalOutcome:
        """Send business context or answers; returns questions or validated rules.

        A successful proposal replaces the current rule set (context rounds
        replace; feedback rounds extend via :meth:`integrate_feedback`).
        """
        if self.state not in PROPOSAL_STATES:
            raise SessionStateError(
                f"cannot propose rules in state {self.state!r}")
        snapshot = self._snapshot()
        try:
            self.transcript.append(Message("expert", expert_text))
            if self.state == "init":
                self.state = "context-given"
            reply = self._call()
            blocks_questions = None
            try:
                blocks_questions = extract_tagged(reply)
            except (UnbalancedTags, MultipleBlocks):
                pass
            if (blocks_questions is not None
                    and blocks_questions.rules_block is None
                    and blocks_questions.questions_block is not None):
                self.state = "awaiting-answers"
                return ProposalOutcome(
                    questions=parse_questions(blocks_questions.questions_block))
            rules, report = self._parse_and_validate(reply)
            if not report.verdict:
                self.validation_history.append(report)
                self.state = "repairing"
                rules, report = self.repair_loop(report)
            self._commit(rules, report, extend=False)
            return ProposalOutcome(rules=list(rules), report=report)
        except TransportFailure:
            self._restore(snapshot)
            raise

    def repair_loop(self, report: ValidationReport) -> tuple[list[DeclareRule], ValidationReport]:
        """Prompt for corrections until validation passes or attempts run out."""
        if report.verdict:
            raise ValueError("repair_loop needs a failing report")
        attempts = 0
        while attempts < self.max_repairs:
            self.transcript.append(Message("system", render_repair_message(report)))
            reply = self._call()
            attempts += 1
            rules, report = self._parse_and_validate(reply)
            if report.verdict:
                return list(rules), report
            self.validation_history.append(report)
        raise RepairExhausted(report, attempts)

    def integrate_feedback(self, feedback_text: str) -> ProposalOutcome:
        """Send model feedback; new rules merge additively with the current set."""
        if not self.current_rules or self.state != "validated":
            raise SessionStateError("feedback needs a validated rule set")
        if not self.model_iterations:
            raise SessionStateError("feedback needs at least one discovered model")
        snapshot = self._snapshot()
        try:
            from .model_io import format_tree_text

            latest = self.model_iterations[-1]
            self.transcript.append(Message(
                "system",
                "Current discovered model:\n" + format_tree_text(latest.tree)))
            self.transcript.append(Message("expert", feedback_text))
            reply = self._call()
            rules, report = self._parse_and_validate(reply)
            if report is not None and rules is not None and report.verdict:
                merged = [entry.rule for entry in self.current_rules] + list(rules)
                report = validate_rules(merged, self.alphabet)
            if not report.verdict:
                self.validation_history.append(report)
                self.state = "repairing"
                rules, report = self.repair_loop(report)
                merged = [entry.rule for entry in self.current_rules] + list(rules)
                report = validate_rules(merged, self.alphabet)
            self._commit(rules, report, extend=True)
            return ProposalOutcome(rules=self.enabled_rules(), report=report)
        except TransportFailure:
            self._restore(snapshot)
            raise

    def add_model_iteration(self, rules: Sequence[DeclareRule], sup: float,
                            tree: ProcessTree) -> None:
        self.model_iterations.append(ModelIteration(tuple(rules), sup, tree))


def render_repair_message(report: ValidationReport) -> str:
    """Describe each validation error and ask for a corrected rule block."""
    lines = ["The proposed constraints did not validate. Problems:"]
    for item in report.errors:
        entry = f"- {item.kind} at entry {item.index}: {item.message}"
        if item.suggestion:
            entry += f" (did you mean {item.suggestion!r}?)"
        lines.append(entry)
    lines.append("Reply with a corrected [RULES] block containing the full "
                 "constraint set, one per line, no other text.")
    return "\n".join(lines)
