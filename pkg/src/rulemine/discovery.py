"""Rule-constrained inductive discovery of process trees.

One recursion step builds the directly-follows graph of the current sub-log,
enumerates binary cuts for the four operators, drops cuts that would force a
violation of a declarative rule in scope, scores the survivors with
deviating/missing-edge costs, picks the cheapest, splits the log, and
recurses.  Base cases emit leaves; when no cut survives, the most permissive
("flower") model over the remaining activities is emitted instead.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from .declare import DeclareRule
from .event_log import Dfg, EventLog, InvalidPartition, build_dfg, split_log
from .tree import ProcessTree, activity, flatten, loop, operator, silent, xor

OPERATOR_RANK = {"sequence": 0, "xor": 1, "parallel": 2, "loop": 3}

# Exhaustive bipartition enumeration is exponential; beyond this alphabet
# size, candidate generation switches to connectivity-guided heuristics.
EXHAUSTIVE_LIMIT = 12


class DiscoveryError(Exception):
    pass


class AlphabetTooSmall(DiscoveryError):
    pass


class LabelNotInScope(DiscoveryError):
    pass


class DepthLimitExceeded(DiscoveryError):
    pass


@dataclass(frozen=True)
class Cut:
    """A bipartition of the current alphabet under one operator.

    For sequence, sigma1 precedes sigma2; for loop, sigma1 is the body and
    sigma2 the redo part.  xor and parallel are symmetric and are kept in
    canonical orientation (sigma1 holds the smallest label).
    """

    operator: str
    sigma1: frozenset[str]
    sigma2: frozenset[str]

    def __post_init__(self):
        if self.operator not in OPERATOR_RANK:
            raise ValueError(f"unknown operator {self.operator!r}")
        if not self.sigma1 or not self.sigma2 or self.sigma1 & self.sigma2:
            raise InvalidPartition(f"bad cut sides {self}")

    @property
    def alphabet(self) -> frozenset[str]:
        return self.sigma1 | self.sigma2

    def sort_key(self):
        return (OPERATOR_RANK[self.operator], sorted(self.sigma1), sorted(self.sigma2))

    def __str__(self) -> str:
        return (f"{self.operator}({{{', '.join(sorted(self.sigma1))}}}, "
                f"{{{', '.join(sorted(self.sigma2))}}})")


@dataclass(frozen=True)
class DiscoveryParams:
    sup: float = 0.2
    max_depth: int = 80
    strict_discharge: bool = False
    workers: int = 1

    def __post_init__(self):
        if not 0 <= self.sup <= 1:
            raise ValueError(f"sup must lie in [0, 1], got {self.sup}")
        if self.max_depth < 1 or self.workers < 1:
            raise ValueError("max_depth and workers must be positive")


def _mask_sides(labels: Sequence[str], mask: int) -> tuple[frozenset[str], frozenset[str]]:
    left = frozenset(l for i, l in enumerate(labels) if mask >> i & 1)
    right = frozenset(l for i, l in enumerate(labels) if not mask >> i & 1)
    return left, right


def _exhaustive_cuts(labels: Sequence[str]) -> Iterator[Cut]:
    full = (1 << len(labels)) - 1
    for op in ("sequence", "xor", "parallel", "loop"):
        for mask in range(1, full):
            if op in ("xor", "parallel") and not mask & 1:
                continue  # canonical orientation: smallest label on the left
            sigma1, sigma2 = _mask_sides(labels, mask)
            yield Cut(op, sigma1, sigma2)


def _connected_components(labels: Sequence[str], neighbours: dict[str, set[str]]) -> list[frozenset[str]]:
    seen: set[str] = set()
    components: list[frozenset[str]] = []
    for label in labels:
        if label in seen:
            continue
        component = {label}
        frontier = [label]
        while frontier:
            node = frontier.pop()
            for other in neighbours.get(node, ()):
                if other not in component:
                    component.add(other)
                    frontier.append(other)
        seen |= component
        components.append(frozenset(component))
    return components


def _strongly_connected(labels: Sequence[str], out_edges: dict[str, set[str]]) -> list[frozenset[str]]:
    """Tarjan's algorithm, iterative, components in deterministic order."""
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    components: list[frozenset[str]] = []
    counter = 0

    for root in labels:
        if root in index:
            continue
        work = [(root, iter(sorted(out_edges.get(root, ()))))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            node, it = work[-1]
            advanced = False
            for succ in it:
                if succ not in index:
                    index[succ] = low[succ] = counter
                    counter += 1
                    stack.append(succ)
                    on_stack.add(succ)
                    work.append((succ, iter(sorted(out_edges.get(succ, ())))))
                    advanced = True
                    break
                if succ in on_stack:
                    low[node] = min(low[node], index[succ])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                component = set()
                while True:
                    member = stack.pop()
                    on_stack.discard(member)
                    component.add(member)
                    if member == node:
                        break
                components.append(frozenset(component))
    return components


def _guided_cuts(dfg: Dfg, labels: Sequence[str]) -> Iterator[Cut]:
    """Candidate generation for large alphabets.

    Bipartitions are taken from (a) single-activity splits, (b) connected
    components of the undirected graph after dropping edges below a few
    frequency thresholds, and (c) prefixes of the strongly-connected-component
    condensation in topological order.
    """
    alphabet = frozenset(labels)

    def orientations(sigma1: frozenset[str], sigma2: frozenset[str]) -> Iterator[Cut]:
        for op in ("sequence", "loop"):
            yield Cut(op, sigma1, sigma2)
            yield Cut(op, sigma2, sigma1)
        for op in ("xor", "parallel"):
            if min(sigma1) < min(sigma2):
                yield Cut(op, sigma1, sigma2)
            else:
                yield Cut(op, sigma2, sigma1)

    for label in labels:
        yield from orientations(frozenset([label]), alphabet - {label})

    frequencies = sorted(dfg.edges.values())
    thresholds = [0]
    for quantile in (0.25, 0.5, 0.75):
        if frequencies:
            thresholds.append(frequencies[int(quantile * (len(frequencies) - 1))])
    for threshold in sorted(set(thresholds)):
        neighbours: dict[str, set[str]] = {}
        for (x, y), frequency in dfg.edges.items():
            if frequency > threshold:
                neighbours.setdefault(x, set()).add(y)
                neighbours.setdefault(y, set()).add(x)
        components = _connected_components(labels, neighbours)
        if len(components) < 2:
            continue
        for component in components:
            if component != alphabet:
                yield from orientations(component, alphabet - component)

    out_edges: dict[str, set[str]] = {}
    for (x, y) in dfg.edges:
        out_edges.setdefault(x, set()).add(y)
    sccs = _strongly_connected(labels, out_edges)
    if len(sccs) > 1:
        # Topological order of the condensation (deterministic by min label).
        component_of = {label: i for i, scc in enumerate(sccs) for label in scc}
        succs: dict[int, set[int]] = {i: set() for i in range(len(sccs))}
        indegree = [0] * len(sccs)
        for (x, y) in dfg.edges:
            cx, cy = component_of[x], component_of[y]
            if cx != cy and cy not in succs[cx]:
                succs[cx].add(cy)
                indegree[cy] += 1
        ready = sorted((i for i in range(len(sccs)) if indegree[i] == 0),
                       key=lambda i: min(sccs[i]))
        order: list[int] = []
        while ready:
            node = ready.pop(0)
            order.append(node)
            for succ in sorted(succs[node], key=lambda i: min(sccs[i])):
                indegree[succ] -= 1
                if indegree[succ] == 0:
                    ready.append(succ)
            ready.sort(key=lambda i: min(sccs[i]))
        prefix: set[str] = set()
        for component_index in order[:-1]:
            prefix |= sccs[component_index]
            sigma1 = frozenset(prefix)
            if sigma1 != alphabet:
                yield from orientations(sigma1, alphabet - sigma1)


def enumerate_cuts(dfg: Dfg) -> list[Cut]:
    """Candidate cuts over the DFG's alphabet, deterministically ordered.

    Exhaustive over all bipartitions up to ``EXHAUSTIVE_LIMIT`` activities;
    connectivity-guided beyond that.
    """
    labels = sorted(dfg.alphabet)
    if len(labels) < 2:
        raise AlphabetTooSmall(f"need at least 2 activities, got {labels}")
    if len(labels) <= EXHAUSTIVE_LIMIT:
        return list(_exhaustive_cuts(labels))
    unique: dict[tuple, Cut] = {}
    for cut in _guided_cuts(dfg, labels):
        key = (cut.operator, cut.sigma1)
        if key not in unique:
            unique[key] = cut
    return sorted(unique.values(), key=Cut.sort_key)


def forces_violation(rule: DeclareRule, cut: Cut) -> bool:
    """True iff every refinement of the cut's two sides must violate the rule.

    A binary rule with both labels on one side is passed down instead of
    forbidding the cut, with one exception: under a loop cut, iteration mixes
    behaviour across passes (an a-producing pass followed by a b-producing
    pass), so not-co-existence and not-succession are forced violations
    wherever their labels sit.
    """
    scope = cut.alphabet
    if any(label not in scope for label in rule.args):
        raise LabelNotInScope(f"{rule} vs {cut}")
    op = rule.template
    if op == "existence":
        (a,) = rule.args
        return cut.operator == "xor" or (cut.operator == "loop" and a in cut.sigma2)
    if op == "at-most":
        return cut.operator == "loop"

    kind = cut.operator
    if kind == "loop" and op in ("not-co-existence", "not-succession"):
        return True
    a, b = rule.args
    a_left = a in cut.sigma1
    b_left = b in cut.sigma1
    if a_left == b_left:
        return False
    if op == "response":
        return (kind == "xor" or kind == "parallel"
                or (kind == "sequence" and not a_left)
                or (kind == "loop" and a_left))
    if op == "precedence":
        return (kind == "xor" or kind == "parallel"
                or (kind == "sequence" and b_left)
                or (kind == "loop" and b_left))
    if op == "co-existence":
        return kind in ("xor", "loop")
    if op == "not-co-existence":
        return kind != "xor"
    if op == "not-succession":
        return kind == "parallel" or (kind == "sequence" and a_left)
    if op == "responded-existence":
        return kind == "xor" or (kind == "loop" and a_left)
    raise AssertionError(op)


def mean_edge_frequency(dfg: Dfg) -> int:
    """Ceiling of the mean positive activity-to-activity edge frequency."""
    if not dfg.edges:
        return 1
    return math.ceil(sum(dfg.edges.values()) / len(dfg.edges))


def cut_cost(cut: Cut, dfg: Dfg, sup: float) -> float:
    """Deviating-edge count plus sup-scaled estimate of missing edges."""
    if not dfg.alphabet <= cut.alphabet:
        raise InvalidPartition(f"{cut} does not cover {sorted(dfg.alphabet)}")
    sigma1, sigma2 = cut.sigma1, cut.sigma2
    m_bar = mean_edge_frequency(dfg)
    kind = cut.operator

    if kind == "sequence":
        dev = sum(f for (x, y), f in dfg.edges.items() if x in sigma2 and y in sigma1)
        has_forward = {x for (x, y) in dfg.edges if x in sigma1 and y in sigma2}
        stuck = sum(
            1 for x in sigma1
            if x not in has_forward and dfg.end_freq.get(x, 0) == 0
        )
        return dev + sup * m_bar * stuck

    if kind == "xor":
        dev = sum(
            f for (x, y), f in dfg.edges.items()
            if (x in sigma1) != (y in sigma1)
        )
        return float(dev)

    if kind == "parallel":
        present12 = sum(1 for (x, y) in dfg.edges if x in sigma1 and y in sigma2)
        present21 = sum(1 for (x, y) in dfg.edges if x in sigma2 and y in sigma1)
        missing = (len(sigma1) * len(sigma2) - present12) + (len(sigma1) * len(sigma2) - present21)
        return sup * m_bar * missing

    if kind == "loop":
        dev = sum(dfg.start_freq.get(y, 0) for y in sigma2)
        dev += sum(dfg.end_freq.get(x, 0) for x in sigma2)
        redo_to_body = {x for (x, y) in dfg.edges if x in sigma2 and y in sigma1}
        body_to_redo = {y for (x, y) in dfg.edges if x in sigma1 and y in sigma2}
        missing = sum(1 for x in sigma2 if x not in redo_to_body)
        missing += sum(1 for x in sigma2 if x not in body_to_redo)
        return dev + sup * m_bar * missing

    raise AssertionError(kind)


def select_cut(candidates: Iterable[Cut], dfg: Dfg, rules: Sequence[DeclareRule],
               sup: float, workers: int = 1) -> Cut | None:
    """Cheapest candidate that no in-scope rule forbids; None when none survive.

    Ties break on operator rank (sequence < xor < parallel < loop), then on
    the sorted label list of sigma1, so the winner is independent of both the
    candidate order and any parallel evaluation schedule.
    """
    survivors: list[Cut] = []
    for cut in candidates:
        scoped = [r for r in rules if all(label in cut.alphabet for label in r.args)]
        if any(forces_violation(rule, cut) for rule in scoped):
            continue
        survivors.append(cut)
    if not survivors:
        return None

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            costs = list(pool.map(lambda c: cut_cost(c, dfg, sup), survivors))
    else:
        costs = [cut_cost(cut, dfg, sup) for cut in survivors]

    best_index = min(
        range(len(survivors)),
        key=lambda i: (costs[i],) + tuple(survivors[i].sort_key()),
    )
    return survivors[best_index]


def pass_down_rules(rules: Sequence[DeclareRule], cut: Cut,
                    strict_discharge: bool = False) -> tuple[list[DeclareRule], list[DeclareRule]]:
    """Scope rules to the two sides of a chosen cut.

    Unary rules follow their label; binary rules with both labels on one side
    follow that side; binary rules separated by the cut are discharged (the
    operator now carries their enforcement).  With ``strict_discharge``,
    discharging response/precedence over a sequence additionally pins the
    consequent side with an existence rule.
    """
    left: list[DeclareRule] = []
    right: list[DeclareRule] = []
    for rule in rules:
        sides = {label in cut.sigma1 for label in rule.args}
        if sides == {True}:
            left.append(rule)
        elif sides == {False}:
            right.append(rule)
        elif strict_discharge and cut.operator == "sequence":
            a, b = rule.args
            if rule.template == "response" and a in cut.sigma1:
                injected = DeclareRule("existence", (b,))
                if injected not in right:
                    right.append(injected)
            elif rule.template == "precedence" and a in cut.sigma1:
                injected = DeclareRule("existence", (a,))
                if injected not in left:
                    left.append(injected)
    return left, right


def scope_rules(rules: Sequence[DeclareRule], alphabet: frozenset[str]) -> list[DeclareRule]:
    """Drop rules referencing activities outside the alphabet."""
    return [r for r in rules if all(label in alphabet for label in r.args)]


def flower_model(alphabet: Iterable[str]) -> ProcessTree:
    """Most permissive model: any activity, any number of times, any order."""
    leaves = [activity(label) for label in sorted(alphabet)]
    body = leaves[0] if len(leaves) == 1 else xor(*leaves)
    return loop(body, silent())


def _strip_empty(log: EventLog) -> tuple[EventLog, int]:
    empties = log.empty_trace_count
    if empties:
        return EventLog({t: c for t, c in log.variants.items() if t}), empties
    return log, 0


def _has_at_most(rules: Sequence[DeclareRule], label: str) -> bool:
    return any(r.template == "at-most" and r.args == (label,) for r in rules)


def _discover(log: EventLog, alphabet: frozenset[str], rules: Sequence[DeclareRule],
              params: DiscoveryParams, depth: int) -> ProcessTree:
    if depth > params.max_depth:
        raise DepthLimitExceeded(f"recursion exceeded {params.max_depth} levels")
    if not alphabet:
        return silent()

    core, empties = _strip_empty(log)
    if not core.variants:
        # No behaviour observed for these activities; keep them but make
        # everything skippable so the alphabet is preserved.
        inner = (activity(next(iter(alphabet))) if len(alphabet) == 1
                 else flower_model(alphabet))
        return xor(silent(), inner)

    if len(alphabet) == 1:
        (label,) = alphabet
        repeated = any(len(trace) > 1 for trace in core.variants)
        if repeated:
            if _has_at_most(rules, label):
                # Honouring the rule beats refitting the repetitions; they are
                # treated as deviations.
                return xor(silent(), activity(label))
            body = loop(activity(label), silent())
            return xor(silent(), body) if empties else body
        return xor(silent(), activity(label)) if empties else activity(label)

    dfg = build_dfg(core).with_alphabet(alphabet)
    cut = select_cut(enumerate_cuts(dfg), dfg, rules, params.sup, params.workers)
    if cut is None:
        subtree = flower_model(alphabet)
    else:
        left_log, right_log = split_log(core, cut)
        left_rules, right_rules = pass_down_rules(rules, cut, params.strict_discharge)
        left = _discover(left_log, cut.sigma1, left_rules, params, depth + 1)
        right = _discover(right_log, cut.sigma2, right_rules, params, depth + 1)
        subtree = operator(cut.operator, (left, right))
    return xor(silent(), subtree) if empties else subtree


def discover(log: EventLog, rules: Sequence[DeclareRule] = (),
             params: DiscoveryParams | None = None) -> ProcessTree:
    """Discover a process tree for the log under the given rules.

    The result is deterministic in (log, rules, params); nested nodes of the
    same associative operator are flattened.
    """
    params = params or DiscoveryParams()
    scoped = scope_rules(rules, log.alphabet)
    tree = _discover(log, log.alphabet, scoped, params, depth=0)
    return flatten(tree)
