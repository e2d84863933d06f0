"""Process-tree semantics, rule verification on models, and serialization.

Trace acceptance is exact (recursive membership with memoization); rule
verification works on the bounded language obtained by unrolling loops a fixed
number of times, with an explicit exactness flag.  Trees convert to workflow
nets for rendering and replay, and serialize as text, structured documents,
DOT, and PNML.
"""

from __future__ import annotations

import json
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from typing import Iterable, Sequence

from .declare import DeclareRule, check_trace
from .event_log import Trace
from .tree import (GLYPHS, OPERATOR_FOR_GLYPH, ProcessTree, activity, operator,
                   silent)

DEFAULT_GUARD = 10 ** 6


class ExplosionGuard(Exception):
    """Raised when bounded-language enumeration exceeds its size cap."""


# ---------------------------------------------------------------------------
# Exact trace membership


def _leaf_sets(tree: ProcessTree) -> dict[int, frozenset[str]]:
    sets: dict[int, frozenset[str]] = {}

    def walk(node: ProcessTree) -> frozenset[str]:
        if node.kind == "activity":
            result = frozenset([node.label])
        elif node.kind == "silent":
            result = frozenset()
        else:
            result = frozenset().union(*(walk(child) for child in node.children))
        sets[id(node)] = result
        return result

    walk(tree)
    return sets


def accepts(tree: ProcessTree, trace: Sequence[str]) -> bool:
    """Exact membership of the trace in the tree's language."""
    trace = tuple(trace)
    leaves = _leaf_sets(tree)
    full = leaves[id(tree)]
    if any(label not in full for label in trace):
        return False
    memo: dict[tuple[int, Trace], bool] = {}

    def member(node: ProcessTree, t: Trace) -> bool:
        key = (id(node), t)
        cached = memo.get(key)
        if cached is not None:
            return cached
        result = _member(node, t)
        memo[key] = result
        return result

    def _member(node: ProcessTree, t: Trace) -> bool:
        kind = node.kind
        if kind == "activity":
            return t == (node.label,)
        if kind == "silent":
            return t == ()
        if kind == "xor":
            return any(member(child, t) for child in node.children)
        if kind == "sequence":
            positions = {0}
            for child in node.children:
                positions = {
                    j for i in positions for j in range(i, len(t) + 1)
                    if member(child, t[i:j])
                }
                if not positions:
                    return False
            return len(t) in positions
        if kind == "parallel":
            return _member_shuffle(node.children, t)
        if kind == "loop":
            body, redo = node.children
            seen = {j for j in range(len(t) + 1) if member(body, t[:j])}
            frontier = list(seen)
            while frontier:
                j = frontier.pop()
                for k in range(j, len(t) + 1):
                    if not member(redo, t[j:k]):
                        continue
                    for m in range(k, len(t) + 1):
                        if m not in seen and member(body, t[k:m]):
                            seen.add(m)
                            frontier.append(m)
            return len(t) in seen
        raise AssertionError(kind)

    def _member_shuffle(children: tuple[ProcessTree, ...], t: Trace) -> bool:
        if len(children) == 1:
            return member(children[0], t)
        head, rest = children[0], children[1:]
        head_labels = leaves[id(head)]
        rest_labels = frozenset().union(*(leaves[id(c)] for c in rest))
        candidates = [i for i, label in enumerate(t) if label in head_labels]
        forced = [i for i in range(len(t)) if i not in candidates]
        if any(t[i] not in rest_labels for i in forced):
            return False
        for mask in range(1 << len(candidates)):
            chosen = {candidates[b] for b in range(len(candidates)) if mask >> b & 1}
            sub = tuple(t[i] for i in range(len(t)) if i in chosen)
            rest_trace = tuple(t[i] for i in range(len(t)) if i not in chosen)
            if member(head, sub) and _member_shuffle(rest, rest_trace):
                return True
        return False

    return member(tree, trace)


# ---------------------------------------------------------------------------
# Bounded language enumeration


@dataclass(frozen=True)
class BoundedLanguage:
    traces: frozenset[Trace]
    loop_bound: int
    max_len: int
    exact: bool

    def sorted_traces(self) -> list[Trace]:
        return sorted(self.traces, key=lambda t: (len(t), t))


def _interleavings(a: Trace, b: Trace) -> set[Trace]:
    if not a:
        return {b}
    if not b:
        return {a}
    return {(a[0],) + rest for rest in _interleavings(a[1:], b)} | {
        (b[0],) + rest for rest in _interleavings(a, b[1:])
    }


def enumerate_language(tree: ProcessTree, loop_bound: int, max_len: int,
                       guard: int = DEFAULT_GUARD) -> BoundedLanguage:
    """All traces with at most ``loop_bound`` redo rounds per loop node and
    length at most ``max_len``."""
    if loop_bound < 0 or max_len < 0:
        raise ValueError("loop_bound and max_len must be non-negative")
    clipped = False

    def checked(traces: set[Trace]) -> set[Trace]:
        if len(traces) > guard:
            raise ExplosionGuard(f"language exceeds {guard} traces")
        return traces

    def concat(left: set[Trace], right: set[Trace]) -> set[Trace]:
        nonlocal clipped
        result: set[Trace] = set()
        for s in left:
            for t in right:
                if len(s) + len(t) <= max_len:
                    result.add(s + t)
                else:
                    clipped = True
        return checked(result)

    def walk(node: ProcessTree) -> set[Trace]:
        nonlocal clipped
        kind = node.kind
        if kind == "activity":
            if max_len >= 1:
                return {(node.label,)}
            clipped = True
            return set()
        if kind == "silent":
            return {()}
        if kind == "xor":
            result: set[Trace] = set()
            for child in node.children:
                result |= walk(child)
            return checked(result)
        if kind == "sequence":
            result = {()}
            for child in node.children:
                result = concat(result, walk(child))
            return result
        if kind == "parallel":
            result = {()}
            for child in node.children:
                child_traces = walk(child)
                merged: set[Trace] = set()
                for s in result:
                    for t in child_traces:
                        if len(s) + len(t) <= max_len:
                            merged |= _interleavings(s, t)
                        else:
                            clipped = True
                result = checked(merged)
            return result
        if kind == "loop":
            body, redo = node.children
            body_traces = walk(body)
            redo_traces = walk(redo)
            result = set(body_traces)
            current = body_traces
            for _ in range(loop_bound):
                current = concat(concat(current, redo_traces), body_traces)
                if not current:
                    break
                result = checked(result | current)
            return result
        raise AssertionError(kind)

    traces = walk(tree)
    return BoundedLanguage(frozenset(traces), loop_bound, max_len,
                           exact=tree.loop_free() and not clipped)


@dataclass(frozen=True)
class ModelVerdict:
    holds: bool
    witness: Trace | None
    exact: bool

    def __str__(self) -> str:
        if self.holds:
            return "holds" + ("" if self.exact else " (bounded language)")
        return f"violated, witness {list(self.witness)}"


def model_satisfies(rule: DeclareRule, tree: ProcessTree, loop_bound: int = 2,
                    max_len: int = 20, guard: int = DEFAULT_GUARD) -> ModelVerdict:
    """Check a rule over the bounded language; the first witness (in
    length-lexicographic order) is reported on violation."""
    language = enumerate_language(tree, loop_bound, max_len, guard)
    for trace in language.sorted_traces():
        if not check_trace(rule, trace):
            return ModelVerdict(False, trace, language.exact)
    return ModelVerdict(True, None, language.exact)


# ---------------------------------------------------------------------------
# Workflow nets


@dataclass(frozen=True)
class WorkflowNet:
    places: tuple[str, ...]
    transitions: tuple[tuple[str, str | None], ...]  # (id, label); None = silent
    arcs: tuple[tuple[str, str], ...]
    source: str
    sink: str


class _NetBuilder:
    def __init__(self):
        self.places: list[str] = []
        self.transitions: list[tuple[str, str | None]] = []
        self.arcs: list[tuple[str, str]] = []

    def place(self, hint: str = "p") -> str:
        name = f"{hint}{len(self.places)}"
        self.places.append(name)
        return name

    def transition(self, label: str | None) -> str:
        name = f"t{len(self.transitions)}"
        self.transitions.append((name, label))
        return name

    def arc(self, src: str, dst: str) -> None:
        self.arcs.append((src, dst))

    def wire(self, node: ProcessTree, pin: str, pout: str) -> None:
        kind = node.kind
        if kind == "activity":
            t = self.transition(node.label)
            self.arc(pin, t)
            self.arc(t, pout)
        elif kind == "silent":
            t = self.transition(None)
            self.arc(pin, t)
            self.arc(t, pout)
        elif kind == "sequence":
            current = pin
            for child in node.children[:-1]:
                mid = self.place()
                self.wire(child, current, mid)
                current = mid
            self.wire(node.children[-1], current, pout)
        elif kind == "xor":
            for child in node.children:
                self.wire(child, pin, pout)
        elif kind == "parallel":
            split = self.transition(None)
            join = self.transition(None)
            self.arc(pin, split)
            self.arc(join, pout)
            for child in node.children:
                branch_in = self.place()
                branch_out = self.place()
                self.arc(split, branch_in)
                self.wire(child, branch_in, branch_out)
                self.arc(branch_out, join)
        elif kind == "loop":
            # Fresh entry/exit places so redo arcs never feed shared places
            # (a redo edge into an xor's shared entry would admit foreign
            # behaviour into the loop).
            body, redo = node.children
            entry = self.place()
            exit_ = self.place()
            t_in = self.transition(None)
            t_out = self.transition(None)
            self.arc(pin, t_in)
            self.arc(t_in, entry)
            self.wire(body, entry, exit_)
            self.wire(redo, exit_, entry)
            self.arc(exit_, t_out)
            self.arc(t_out, pout)
        else:
            raise AssertionError(kind)


def to_workflow_net(tree: ProcessTree) -> WorkflowNet:
    """Standard recursive tree-to-net construction; language-preserving."""
    builder = _NetBuilder()
    source = builder.place("source")
    sink = builder.place("sink")
    builder.wire(tree, source, sink)
    return WorkflowNet(tuple(builder.places), tuple(builder.transitions),
                       tuple(builder.arcs), source, sink)


def replay_accepts(net: WorkflowNet, trace: Sequence[str], step_cap: int = 10 ** 6) -> bool:
    """Token-game replay from source to sink, searching over silent moves."""
    trace = tuple(trace)
    preset: dict[str, list[str]] = {t: [] for t, _ in net.transitions}
    postset: dict[str, list[str]] = {t: [] for t, _ in net.transitions}
    labels = dict(net.transitions)
    place_set = set(net.places)
    for src, dst in net.arcs:
        if src in place_set:
            preset[dst].append(src)
        else:
            postset[src].append(dst)

    initial = frozenset([(net.source, 1)])
    goal = frozenset([(net.sink, 1)])
    seen = {(initial, 0)}
    frontier = [(initial, 0)]
    steps = 0
    while frontier:
        marking, pos = frontier.pop()
        if marking == goal and pos == len(trace):
            return True
        steps += 1
        if steps > step_cap:
            raise ExplosionGuard("replay search exceeded its step cap")
        counts = dict(marking)
        for t_id, label in net.transitions:
            if any(counts.get(p, 0) < 1 for p in preset[t_id]):
                continue
            if label is not None:
                if pos >= len(trace) or trace[pos] != label:
                    continue
                next_pos = pos + 1
            else:
                next_pos = pos
            next_counts = dict(counts)
            for p in preset[t_id]:
                next_counts[p] -= 1
            for p in postset[t_id]:
                next_counts[p] = next_counts.get(p, 0) + 1
            state = (frozenset((p, c) for p, c in next_counts.items() if c), next_pos)
            if state not in seen:
                seen.add(state)
                frontier.append(state)
    return False


# ---------------------------------------------------------------------------
# Serialization


def _quote(label: str) -> str:
    return "'" + label.replace("\\", "\\\\").replace("'", "\\'") + "'"


def format_tree_text(tree: ProcessTree) -> str:
    """Compact textual form: seq/xor/par/loop with quoted labels, tau silent."""
    if tree.kind == "activity":
        return _quote(tree.label)
    if tree.kind == "silent":
        return "tau"
    children = ", ".join(format_tree_text(child) for child in tree.children)
    return f"{GLYPHS[tree.kind]}({children})"


class TreeTextError(Exception):
    pass


class _TreeTextParser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, message: str) -> TreeTextError:
        return TreeTextError(f"position {self.pos}: {message}")

    def skip_space(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def expect(self, char: str) -> None:
        self.skip_space()
        if self.pos >= len(self.text) or self.text[self.pos] != char:
            raise self.error(f"expected {char!r}")
        self.pos += 1

    def parse_node(self) -> ProcessTree:
        self.skip_space()
        if self.pos >= len(self.text):
            raise self.error("unexpected end of input")
        char = self.text[self.pos]
        if char == "'":
            return activity(self.parse_label())
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos].isalpha():
            self.pos += 1
        word = self.text[start:self.pos]
        if word == "tau":
            return silent()
        if word not in OPERATOR_FOR_GLYPH:
            raise self.error(f"unknown node {word!r}")
        self.expect("(")
        children = [self.parse_node()]
        self.skip_space()
        while self.pos < len(self.text) and self.text[self.pos] == ",":
            self.pos += 1
            children.append(self.parse_node())
            self.skip_space()
        self.expect(")")
        return operator(OPERATOR_FOR_GLYPH[word], children)

    def parse_label(self) -> str:
        self.expect("'")
        out: list[str] = []
        while self.pos < len(self.text):
            char = self.text[self.pos]
            if char == "\\" and self.pos + 1 < len(self.text):
                out.append(self.text[self.pos + 1])
                self.pos += 2
                continue
            if char == "'":
                self.pos += 1
                return "".join(out)
            out.append(char)
            self.pos += 1
        raise self.error("unterminated label")


def parse_tree_text(text: str) -> ProcessTree:
    parser = _TreeTextParser(text)
    node = parser.parse_node()
    parser.skip_space()
    if parser.pos != len(text):
        raise parser.error("trailing input")
    return node


def tree_to_document(tree: ProcessTree) -> dict:
    if tree.kind == "activity":
        return {"type": "activity", "label": tree.label}
    if tree.kind == "silent":
        return {"type": "silent"}
    return {"type": tree.kind,
            "children": [tree_to_document(child) for child in tree.children]}


def tree_from_document(doc: dict) -> ProcessTree:
    kind = doc.get("type")
    if kind == "activity":
        return activity(doc["label"])
    if kind == "silent":
        return silent()
    return operator(kind, [tree_from_document(child) for child in doc.get("children", [])])


def net_to_dot(net: WorkflowNet) -> str:
    """Graphviz rendering of a workflow net (places round, transitions boxed)."""
    lines = ["digraph workflow {", "  rankdir=LR;"]
    for place in net.places:
        shape = "circle"
        extra = ""
        if place == net.source:
            extra = ', style=filled, fillcolor="#c8e6c9"'
        elif place == net.sink:
            extra = ', style=filled, fillcolor="#ffcdd2"'
        lines.append(f'  "{place}" [shape={shape}, label=""{extra}];')
    for t_id, label in net.transitions:
        if label is None:
            lines.append(f'  "{t_id}" [shape=box, label="", style=filled, fillcolor=black, height=0.2];')
        else:
            text = label.replace("\\", "\\\\").replace('"', '\\"')
            lines.append(f'  "{t_id}" [shape=box, label="{text}"];')
    for src, dst in net.arcs:
        lines.append(f'  "{src}" -> "{dst}";')
    lines.append("}")
    return "\n".join(lines) + "\n"


def net_to_pnml(net: WorkflowNet) -> str:
    """Minimal PNML document: places, transitions, arcs, labels."""
    pnml = ET.Element("pnml")
    net_el = ET.SubElement(pnml, "net", id="net1",
                           type="http://www.pnml.org/version-2009/grammar/ptnet")
    page = ET.SubElement(net_el, "page", id="page1")
    for place in net.places:
        place_el = ET.SubElement(page, "place", id=place)
        if place == net.source:
            marking = ET.SubElement(place_el, "initialMarking")
            ET.SubElement(marking, "text").text = "1"
    for t_id, label in net.transitions:
        transition_el = ET.SubElement(page, "transition", id=t_id)
        if label is not None:
            name = ET.SubElement(transition_el, "name")
            ET.SubElement(name, "text").text = label
    for index, (src, dst) in enumerate(net.arcs):
        ET.SubElement(page, "arc", id=f"a{index}", source=src, target=dst)
    ET.indent(pnml)
    return ET.tostring(pnml, encoding="unicode", xml_declaration=True) + "\n"


EXPORT_FORMATS = ("tree-text", "tree-structured-document", "graph-dot", "net-pnml")


def export(tree: ProcessTree, format: str) -> str:
    """Serialize a tree (or its workflow net) in one of the supported formats."""
    if format == "tree-text":
        return format_tree_text(tree)
    if format == "tree-structured-document":
        return json.dumps(tree_to_document(tree), indent=2) + "\n"
    if format == "graph-dot":
        return net_to_dot(to_workflow_net(tree))
    if format == "net-pnml":
        return net_to_pnml(to_workflow_net(tree))
    raise ValueError(f"unknown export format {format!r}; expected one of {EXPORT_FORMATS}")
