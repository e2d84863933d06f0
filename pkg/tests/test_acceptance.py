"""Acceptance suite: one test per top-level criterion, each printing a
PASS/FAIL line (run with ``pytest tests/test_acceptance.py -s`` to see them).
"""

import itertools
import random
import time
from collections import Counter
from contextlib import contextmanager

import pytest

from rulemine.declare import (DeclareRule, TEMPLATES, check_trace, confidence,
                              format_rules, parse_rules, validate_rules)
from rulemine.discovery import (Cut, DiscoveryParams, discover, forces_violation)
from rulemine.event_log import EventLog
from rulemine.llm_bridge import (QueueTransport, RefinementSession,
                                 RepairExhausted)
from rulemine.model_io import accepts, enumerate_language, format_tree_text
from rulemine.model_io import model_satisfies
from rulemine.tree import ProcessTree, activity, operator

from conftest import read
from test_llm_bridge import (QUESTIONS_REPLY, clean_rules_block,
                             drifted_rules_block, rules_reply)


@contextmanager
def criterion(name: str):
    try:
        yield
    except BaseException:
        print(f"[criterion] {name}: FAIL")
        raise
    print(f"[criterion] {name}: PASS")


ACCEPT_TRACES = [
    ("A-created", "A-canceled"),
    ("A-created", "Doc-checked", "Hist-checked", "A-accepted"),
    ("A-created", "Doc-checked", "Hist-checked", "A-rejected"),
]
REJECT_TRACES = [
    ("A-created", "A-canceled", "A-accepted"),
    ("A-created", "Doc-checked", "Hist-checked", "A-rejected", "A-accepted"),
]


def test_motivating_example_reproduction(motivating_log, motivating_rules):
    """Rule-guided discovery on the 1000-trace fixture honours all four rules
    and the expected accept/reject behaviour, in under five seconds."""
    with criterion("motivating-example reproduction"):
        started = time.perf_counter()
        tree = discover(motivating_log, motivating_rules, DiscoveryParams(sup=0.2))
        for rule in motivating_rules:
            verdict = model_satisfies(rule, tree, loop_bound=2, max_len=8)
            assert verdict.holds, f"{rule} violated: {verdict.witness}"
        for trace in ACCEPT_TRACES:
            assert accepts(tree, trace), trace
        for trace in REJECT_TRACES:
            assert not accepts(tree, trace), trace
        elapsed = time.perf_counter() - started
        assert elapsed < 5.0, f"took {elapsed:.2f}s"


def test_baseline_contrast(motivating_log, motivating_rules):
    """Without rules the same log yields a different model whose bounded
    language (loop bound 2, max length 8) violates at least one rule."""
    with criterion("baseline contrast"):
        constrained = discover(motivating_log, motivating_rules,
                               DiscoveryParams(sup=0.2))
        baseline = discover(motivating_log, [], DiscoveryParams(sup=0.2))
        assert format_tree_text(baseline) != format_tree_text(constrained)
        language = enumerate_language(baseline, loop_bound=2, max_len=8)
        violating = [
            trace for trace in language.sorted_traces()
            if any(not check_trace(rule, trace) for rule in motivating_rules)
        ]
        assert violating, "baseline admits no rule-violating trace"


# ---------------------------------------------------------------------------
# Filter-table oracle. The independent derivation: a cut forces a violation
# iff EVERY pair of sub-languages over the two sides (traces of length <= 3,
# every side activity covered) composes to a language containing a violating
# trace.  Composition is monotone under language inclusion and any covering
# language contains a covering subset of size <= |side|, so quantifying over
# covering languages of size <= |side| decides exactly the same predicate as
# the full family.


def _traces_over(side, max_len=3):
    out = [()]
    for n in range(1, max_len + 1):
        out.extend(itertools.product(sorted(side), repeat=n))
    return out


def _covering_languages(side):
    pool = _traces_over(side)
    langs = []
    for size in range(1, len(side) + 1):
        for combo in itertools.combinations(pool, size):
            if {l for t in combo for l in t} >= set(side):
                langs.append(combo)
    return langs


def _interleave(a, b):
    if not a:
        return {b}
    if not b:
        return {a}
    return ({(a[0],) + rest for rest in _interleave(a[1:], b)}
            | {(b[0],) + rest for rest in _interleave(a, b[1:])})


def _compose(op, l1, l2):
    if op == "xor":
        return set(l1) | set(l2)
    if op == "sequence":
        return {s + t for s in l1 for t in l2}
    if op == "parallel":
        out = set()
        for s in l1:
            for t in l2:
                out |= _interleave(s, t)
        return out
    if op == "loop":  # body (redo body)*, unrolled to two redo rounds
        out = set(l1)
        for b1 in l1:
            for r1 in l2:
                for b2 in l1:
                    out.add(b1 + r1 + b2)
                    for r2 in l2:
                        for b3 in l1:
                            out.add(b1 + r1 + b2 + r2 + b3)
        return out
    raise AssertionError(op)


def forced_violation_oracle(rule, op, sigma1, sigma2, composed_cache):
    key = (op, tuple(sorted(sigma1)), tuple(sorted(sigma2)))
    if key not in composed_cache:
        composed_cache[key] = [
            _compose(op, l1, l2)
            for l1 in _covering_languages(sigma1)
            for l2 in _covering_languages(sigma2)
        ]
    verdict_for = {}

    def has_violating_trace(language):
        for trace in language:
            verdict = verdict_for.get(trace)
            if verdict is None:
                verdict = not check_trace(rule, trace)
                verdict_for[trace] = verdict
            if verdict:
                return True
        return False

    return all(has_violating_trace(language) for language in composed_cache[key])


def test_filter_table_oracle_equivalence():
    """forces_violation matches the brute-force forced-violation oracle for
    all templates x operators x orientations x same-side cases over {a,b,c}."""
    with criterion("filter-table oracle equivalence"):
        started = time.perf_counter()
        labels = ["a", "b", "c"]
        rules = []
        for template, arity in TEMPLATES.items():
            if arity == 1:
                rules += [DeclareRule(template, (x,)) for x in labels]
            else:
                rules += [DeclareRule(template, (x, y))
                          for x in labels for y in labels if x != y]
        cuts = []
        for op in ("sequence", "xor", "parallel", "loop"):
            for mask in range(1, 7):
                sigma1 = frozenset(l for i, l in enumerate(labels) if mask >> i & 1)
                cuts.append(Cut(op, sigma1, frozenset(labels) - sigma1))

        composed_cache = {}
        mismatches = []
        for rule in rules:
            for cut in cuts:
                table = forces_violation(rule, cut)
                oracle = forced_violation_oracle(
                    rule, cut.operator, cut.sigma1, cut.sigma2, composed_cache)
                if table != oracle:
                    mismatches.append((str(rule), str(cut), table, oracle))
        assert not mismatches, mismatches[:5]
        elapsed = time.perf_counter() - started
        assert elapsed < 60.0, f"took {elapsed:.2f}s"


def quantifier_oracle(rule, trace):
    n = len(trace)
    template = rule.template
    if template == "at-most":
        return sum(1 for x in trace if x == rule.args[0]) <= 1
    if template == "existence":
        return any(x == rule.args[0] for x in trace)
    a, b = rule.args
    if template == "response":
        return all(any(trace[j] == b for j in range(i + 1, n))
                   for i in range(n) if trace[i] == a)
    if template == "precedence":
        return all(any(trace[j] == a for j in range(i))
                   for i in range(n) if trace[i] == b)
    if template == "co-existence":
        return any(x == a for x in trace) == any(x == b for x in trace)
    if template == "not-co-existence":
        return not (any(x == a for x in trace) and any(x == b for x in trace))
    if template == "not-succession":
        return not any(trace[i] == a and trace[j] == b
                       for i in range(n) for j in range(i + 1, n))
    if template == "responded-existence":
        return not any(x == a for x in trace) or any(x == b for x in trace)
    raise AssertionError(template)


def test_declare_semantics_property_suite():
    """check_trace agrees with the quantifier-by-enumeration oracle on 1000
    random traces (alphabet 5, length <= 12) for every template instance."""
    with criterion("declare semantics property suite"):
        rng = random.Random(20240810)
        labels = ["a", "b", "c", "d", "e"]
        rules = []
        for template, arity in TEMPLATES.items():
            if arity == 1:
                rules += [DeclareRule(template, (x,)) for x in labels]
            else:
                rules += [DeclareRule(template, (x, y))
                          for x in labels for y in labels if x != y]
        discrepancies = 0
        for _ in range(1000):
            trace = tuple(rng.choice(labels) for _ in range(rng.randint(0, 12)))
            for rule in rules:
                if check_trace(rule, trace) != quantifier_oracle(rule, trace):
                    discrepancies += 1
        assert discrepancies == 0


def test_confidence_values(motivating_log):
    """Exact confidence of the two derived fixtures: 0.965 and 0.870."""
    with criterion("confidence values"):
        assert confidence(
            DeclareRule("not-co-existence", ("A-accepted", "A-rejected")),
            motivating_log) == 0.965
        assert confidence(
            DeclareRule("response", ("Doc-checked", "Hist-checked")),
            motivating_log) == 0.870


def test_case_study_fixtures(case_study_log, case_study_initial_rules,
                             case_study_feedback_rules):
    """The 17- and 5-rule blocks round-trip byte-identically, the union set
    validates, and the mock session yields exactly those sets in two rounds
    with a 3+ question round first."""
    with criterion("case-study fixtures"):
        initial_text = read("case_study_initial_rules.txt")
        feedback_text = read("case_study_feedback_rules.txt")
        assert format_rules(parse_rules(initial_text)) == initial_text
        assert format_rules(parse_rules(feedback_text)) == feedback_text
        assert len(case_study_initial_rules) == 17
        assert len(case_study_feedback_rules) == 5

        union = case_study_initial_rules + case_study_feedback_rules
        alphabet = {label for rule in union for label in rule.args}
        report = validate_rules(union, alphabet)
        assert report.verdict and len(union) == 22

        session = RefinementSession(
            session_id="case", alphabet=tuple(sorted(case_study_log.alphabet)),
            transport=QueueTransport([
                QUESTIONS_REPLY,
                rules_reply(initial_text),
                rules_reply(feedback_text),
            ]))
        first = session.propose_rules(read("case_study_context.txt"))
        assert first.questions is not None and len(first.questions) >= 3
        second = session.propose_rules(read("case_study_answers.txt"))
        assert second.rules == case_study_initial_rules

        tree = discover(case_study_log, session.enabled_rules(),
                        DiscoveryParams(sup=0.2))
        session.add_model_iteration(session.enabled_rules(), 0.2, tree)
        session.integrate_feedback(read("case_study_feedback.txt"))
        assert [entry.rule for entry in session.current_rules] == union
        assert session.rounds == 2


def test_repair_loop(motivating_log, motivating_rules):
    """Unknown template, then the misspelled label, then a clean set: success
    after exactly two repair rounds; endless garbage exhausts at attempt 3."""
    with criterion("repair loop"):
        session = RefinementSession(
            session_id="fix", alphabet=tuple(sorted(motivating_log.alphabet)),
            transport=QueueTransport([
                rules_reply("always-after(A-created, A-canceled)"),
                drifted_rules_block(),
                clean_rules_block(),
            ]))
        outcome = session.propose_rules(read("motivating_feedback.txt"))
        assert outcome.rules == motivating_rules
        repair_prompts = [m for m in session.transcript if m.speaker == "system"]
        assert len(repair_prompts) == 2

        hopeless = RefinementSession(
            session_id="bad", alphabet=tuple(sorted(motivating_log.alphabet)),
            transport=QueueTransport([rules_reply("always-after(a, b)")] * 4))
        with pytest.raises(RepairExhausted) as err:
            hopeless.propose_rules("context")
        assert err.value.attempts == 3


def test_determinism(motivating_log, motivating_rules):
    """Ten discoveries with varying worker counts export byte-identically."""
    with criterion("determinism"):
        exports = []
        for workers in [1, 2, 4, 1, 2, 4, 8, 1, 2, 4]:
            tree = discover(motivating_log, motivating_rules,
                            DiscoveryParams(sup=0.2, workers=workers))
            exports.append(format_tree_text(tree))
        assert len(set(exports)) == 1


# ---------------------------------------------------------------------------
# Desk-scale substitute for the private industrial log: a synthetic stress log
# sampled from a random process tree.


def _random_tree(labels, rng):
    if len(labels) == 1:
        return activity(labels[0])
    shuffled = list(labels)
    rng.shuffle(shuffled)
    split = rng.randint(1, len(shuffled) - 1)
    kind = rng.choice(["sequence", "xor", "parallel", "loop"])
    return operator(kind, (_random_tree(sorted(shuffled[:split]), rng),
                           _random_tree(sorted(shuffled[split:]), rng)))


def _sample_trace(node: ProcessTree, rng) -> list:
    if node.kind == "activity":
        return [node.label]
    if node.kind == "silent":
        return []
    if node.kind == "xor":
        return _sample_trace(rng.choice(node.children), rng)
    if node.kind == "sequence":
        out = []
        for child in node.children:
            out += _sample_trace(child, rng)
        return out
    if node.kind == "parallel":
        pools = [_sample_trace(child, rng) for child in node.children]
        out = []
        while any(pools):
            pool = rng.choice([p for p in pools if p])
            out.append(pool.pop(0))
        return out
    if node.kind == "loop":
        body, redo = node.children
        out = _sample_trace(body, rng)
        while rng.random() < 0.3 and len(out) < 60:
            out += _sample_trace(redo, rng) + _sample_trace(body, rng)
        return out
    raise AssertionError(node.kind)


def test_stress_discovery():
    """100k traces over 16 activities sampled from a random tree: discovery
    finishes in under a minute and is deterministic across repeats."""
    with criterion("synthetic stress log"):
        rng = random.Random(16)
        generator = _random_tree([f"act{i:02d}" for i in range(16)], rng)
        counts = Counter(
            tuple(_sample_trace(generator, rng)) for _ in range(100_000))
        log = EventLog(dict(counts))
        assert log.total_traces == 100_000
        assert len(log.alphabet) == 16

        started = time.perf_counter()
        first = discover(log, [], DiscoveryParams(sup=0.2))
        elapsed = time.perf_counter() - started
        assert elapsed < 60.0, f"discovery took {elapsed:.2f}s"

        second = discover(log, [], DiscoveryParams(sup=0.2, workers=4))
        assert format_tree_text(first) == format_tree_text(second)
