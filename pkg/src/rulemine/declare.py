"""The eight supported declarative rule templates: semantics, grammar, mining.

A rule applies one template to one or two activity labels.  Rules are checked
per trace, scored on logs as a satisfaction fraction ("confidence"), parsed
from and printed to a one-rule-per-line grammar, and validated against a log
alphabet.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .event_log import EventLog, Trace

# Template name -> arity, in canonical (presentation) order.
TEMPLATES: dict[str, int] = {
    "at-most": 1,
    "existence": 1,
    "response": 2,
    "precedence": 2,
    "co-existence": 2,
    "not-co-existence": 2,
    "not-succession": 2,
    "responded-existence": 2,
}

TEMPLATE_ORDER = {name: i for i, name in enumerate(TEMPLATES)}

# One-line semantics per template, phrased over placeholder activities a and b.
TEMPLATE_MEANING: dict[str, str] = {
    "at-most": "a occurs at most once.",
    "existence": "a occurs at least once.",
    "response": "If a occurs, then b occurs after a.",
    "precedence": "b occurs only if preceded by a.",
    "co-existence": "a and b occur together.",
    "not-co-existence": "a and b never occur together.",
    "not-succession": "b cannot occur after a.",
    "responded-existence": "If a occurs in the trace, then b occurs as well.",
}


class RuleError(Exception):
    """Base class for rule grammar errors."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.kind = type(self).__name__


class UnknownTemplate(RuleError):
    def __init__(self, line: int, name: str):
        super().__init__(line, f"unknown template {name!r}")
        self.name = name


class ArityMismatch(RuleError):
    def __init__(self, line: int, name: str, expected: int, got: int):
        super().__init__(line, f"{name} takes {expected} activit{'y' if expected == 1 else 'ies'}, got {got}")
        self.name = name
        self.expected = expected
        self.got = got


class MalformedLine(RuleError):
    def __init__(self, line: int, message: str):
        super().__init__(line, message)


class EmptyLog(Exception):
    pass


@dataclass(frozen=True, order=True)
class DeclareRule:
    """One template applied to one or two activity labels."""

    template: str
    args: tuple[str, ...]

    def __post_init__(self):
        arity = TEMPLATES.get(self.template)
        if arity is None:
            raise ValueError(f"unknown template {self.template!r}")
        if len(self.args) != arity:
            raise ValueError(f"{self.template} takes {arity} argument(s), got {len(self.args)}")
        if arity == 2 and self.args[0] == self.args[1]:
            raise ValueError(f"{self.template} requires two distinct activities")

    def __str__(self) -> str:
        return f"{self.template}({', '.join(self.args)})"

    def sort_key(self) -> tuple[int, tuple[str, ...]]:
        return (TEMPLATE_ORDER[self.template], self.args)


def check_trace(rule: DeclareRule, trace: Sequence[str]) -> bool:
    """Truth of the rule's template on one trace."""
    t = rule.template
    if t == "at-most":
        return trace.count(rule.args[0]) <= 1
    if t == "existence":
        return rule.args[0] in trace
    a, b = rule.args
    if t == "response":
        # Every a needs a later b; equivalently the last a is followed by a b.
        pending = False
        for label in trace:
            if label == a:
                pending = True
            elif label == b:
                pending = False
        return not pending
    if t == "precedence":
        seen_a = False
        for label in trace:
            if label == a:
                seen_a = True
            elif label == b and not seen_a:
                return False
        return True
    if t == "co-existence":
        return (a in trace) == (b in trace)
    if t == "not-co-existence":
        return not (a in trace and b in trace)
    if t == "not-succession":
        seen_a = False
        for label in trace:
            if label == a:
                seen_a = True
            elif label == b and seen_a:
                return False
        return True
    if t == "responded-existence":
        return (a not in trace) or (b in trace)
    raise AssertionError(t)


def confidence(rule: DeclareRule, log: EventLog) -> float:
    """Fraction of traces (count-weighted) satisfying the rule.

    Vacuously satisfied traces count as satisfied.
    """
    if log.total_traces < 1:
        raise EmptyLog("confidence needs at least one trace")
    satisfied = sum(
        count for trace, count in log.variants.items() if check_trace(rule, trace)
    )
    return satisfied / log.total_traces


def _activated(rule: DeclareRule, trace: Sequence[str]) -> bool:
    """Whether the trace triggers the rule at all (see activation_confidence)."""
    t = rule.template
    if t == "existence":
        return True
    if t in ("at-most", "response", "not-succession", "responded-existence"):
        return rule.args[0] in trace
    if t == "precedence":
        return rule.args[1] in trace
    # co-existence / not-co-existence: either activity triggers the constraint
    return rule.args[0] in trace or rule.args[1] in trace


def activation_confidence(rule: DeclareRule, log: EventLog) -> float:
    """Satisfaction fraction over activated traces only.

    The plain :func:`confidence` counts vacuously satisfied traces as
    satisfied; this variant conditions on the traces that trigger the rule
    (e.g. traces containing ``a`` for response(a, b)).  A log with no
    activated trace scores 1.0.
    """
    if log.total_traces < 1:
        raise EmptyLog("confidence needs at least one trace")
    activated = satisfied = 0
    for trace, count in log.variants.items():
        if _activated(rule, trace):
            activated += count
            if check_trace(rule, trace):
                satisfied += count
    return satisfied / activated if activated else 1.0


def all_rules(alphabet: Iterable[str]) -> list[DeclareRule]:
    """Every rule instantiable over the alphabet, in canonical order."""
    labels = sorted(alphabet)
    rules: list[DeclareRule] = []
    for template, arity in TEMPLATES.items():
        if arity == 1:
            rules.extend(DeclareRule(template, (a,)) for a in labels)
        else:
            rules.extend(
                DeclareRule(template, (a, b))
                for a in labels
                for b in labels
                if a != b
            )
    return rules


def mine_rules(log: EventLog, min_confidence: float = 1.0) -> list[DeclareRule]:
    """Rules over the log alphabet whose confidence reaches the threshold."""
    if not 0 < min_confidence <= 1:
        raise ValueError(f"min_confidence must be in (0, 1], got {min_confidence}")
    if log.total_traces < 1:
        raise EmptyLog("mining needs at least one trace")
    return [
        rule for rule in all_rules(log.alphabet)
        if confidence(rule, log) >= min_confidence
    ]


def parse_rule_line(line: str, number: int = 1) -> DeclareRule:
    """Parse a single ``template(arg[, arg])`` line."""
    text = line.strip()
    open_paren = text.find("(")
    if open_paren < 0 or not text.endswith(")"):
        raise MalformedLine(number, f"expected template(...), got {text!r}")
    name = text[:open_paren].strip()
    if name not in TEMPLATES:
        raise UnknownTemplate(number, name)
    body = text[open_paren + 1:-1]
    args = tuple(part.strip() for part in body.split(","))
    if any(not part for part in args):
        raise MalformedLine(number, f"empty activity label in {text!r}")
    if len(args) != TEMPLATES[name]:
        raise ArityMismatch(number, name, TEMPLATES[name], len(args))
    if len(args) == 2 and args[0] == args[1]:
        raise MalformedLine(number, f"{name} requires two distinct activities")
    return DeclareRule(name, args)


def parse_rules(text: str) -> list[DeclareRule]:
    """Parse the rule file grammar: one rule per line, ``#`` comments."""
    rules: list[DeclareRule] = []
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        rules.append(parse_rule_line(line, number))
    return rules


def format_rules(rules: Iterable[DeclareRule]) -> str:
    """Print rules in the grammar accepted by :func:`parse_rules`."""
    return "".join(f"{rule}\n" for rule in rules)


@dataclass(frozen=True)
class ValidationItem:
    index: int
    severity: str  # "error" | "warning"
    kind: str
    message: str
    suggestion: str | None = None

    def to_document(self) -> dict:
        doc = {
            "index": self.index,
            "severity": self.severity,
            "kind": self.kind,
            "message": self.message,
        }
        if self.suggestion is not None:
            doc["suggestion"] = self.suggestion
        return doc


@dataclass(frozen=True)
class ValidationReport:
    items: tuple[ValidationItem, ...]
    verdict: bool = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        object.__setattr__(
            self, "verdict", all(item.severity != "error" for item in self.items)
        )

    @property
    def errors(self) -> list[ValidationItem]:
        return [item for item in self.items if item.severity == "error"]

    @property
    def warnings(self) -> list[ValidationItem]:
        return [item for item in self.items if item.severity == "warning"]

    def to_document(self) -> dict:
        return {"verdict": "pass" if self.verdict else "fail",
                "items": [item.to_document() for item in self.items]}

    @staticmethod
    def from_document(doc: dict) -> "ValidationReport":
        return ValidationReport(tuple(
            ValidationItem(item["index"], item["severity"], item["kind"],
                           item["message"], item.get("suggestion"))
            for item in doc.get("items", ())
        ))


def edit_distance(a: str, b: str, cap: int | None = None) -> int:
    """Levenshtein distance; stops early once ``cap`` is exceeded."""
    if a == b:
        return 0
    if len(a) > len(b):
        a, b = b, a
    previous = list(range(len(a) + 1))
    for j, cb in enumerate(b, start=1):
        current = [j]
        for i, ca in enumerate(a, start=1):
            current.append(min(
                previous[i] + 1,
                current[i - 1] + 1,
                previous[i - 1] + (ca != cb),
            ))
        if cap is not None and min(current) > cap:
            return cap + 1
        previous = current
    return previous[-1]


SUGGESTION_DISTANCE = 3


def _nearest_label(label: str, alphabet: Iterable[str]) -> str | None:
    best: tuple[int, str] | None = None
    for candidate in sorted(alphabet):
        distance = edit_distance(label, candidate, cap=SUGGESTION_DISTANCE)
        if distance <= SUGGESTION_DISTANCE and (best is None or distance < best[0]):
            best = (distance, candidate)
    return best[1] if best else None


def validate_rules(rules: Sequence[DeclareRule], alphabet: Iterable[str]) -> ValidationReport:
    """Check rule labels against the alphabet and flag duplicate/contradictory rules.

    Unknown labels are errors (with a nearest-label suggestion when the edit
    distance is at most 3); duplicates and directly contradictory pairs are
    warnings.
    """
    alphabet = frozenset(alphabet)
    items: list[ValidationItem] = []

    for index, rule in enumerate(rules):
        for label in rule.args:
            if label not in alphabet:
                items.append(ValidationItem(
                    index, "error", "UnknownActivity",
                    f"{rule}: activity {label!r} not in the log alphabet",
                    suggestion=_nearest_label(label, alphabet),
                ))

    seen: dict[DeclareRule, int] = {}
    for index, rule in enumerate(rules):
        if rule in seen:
            items.append(ValidationItem(
                index, "warning", "DuplicateRule",
                f"{rule} duplicates rule {seen[rule]}",
            ))
        else:
            seen[rule] = index

    by_pair: dict[tuple[str, frozenset[str]], list[int]] = {}
    for index, rule in enumerate(rules):
        if len(rule.args) == 2:
            by_pair.setdefault((rule.template, frozenset(rule.args)), []).append(index)
    existence_labels = {rule.args[0] for rule in rules if rule.template == "existence"}
    flagged: set[frozenset[str]] = set()
    for (template, pair), indices in sorted(
            by_pair.items(), key=lambda kv: (kv[0][0], sorted(kv[0][1]))):
        if template != "not-co-existence" or pair in flagged:
            continue
        if ("co-existence", pair) in by_pair:
            flagged.add(pair)
            items.append(ValidationItem(
                indices[0], "warning", "ContradictoryPair",
                f"not-co-existence and co-existence both given for {sorted(pair)}",
            ))
        elif pair <= existence_labels:
            flagged.add(pair)
            items.append(ValidationItem(
                indices[0], "warning", "ContradictoryPair",
                f"both activities in {sorted(pair)} are required to exist but may not co-occur",
            ))

    items.sort(key=lambda item: (item.index, item.severity, item.kind, item.message))
    return ValidationReport(tuple(items))


def report_from_parse_error(error: RuleError) -> ValidationReport:
    """Wrap a grammar error as a one-item failing report (for repair loops)."""
    return ValidationReport((ValidationItem(
        error.line, "error", error.kind, str(error)),))
