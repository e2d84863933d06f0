"""Shared discovery pipeline used by both the CLI and the HTTP service.

Keeping one code path guarantees that a service-triggered discovery and a
command-line discovery of the same inputs produce byte-identical exports.
"""

from __future__ import annotations

from dataclasses import dataclass

from .declare import DeclareRule, confidence
from .discovery import (Cut, DiscoveryParams, discover, enumerate_cuts,
                        scope_rules, select_cut)
from .event_log import EventLog, build_dfg
from .model_io import (ModelVerdict, export, format_tree_text, model_satisfies)
from .tree import ProcessTree


@dataclass(frozen=True)
class DiscoveryRun:
    tree: ProcessTree
    top_cut: Cut | None
    verdicts: tuple[tuple[DeclareRule, ModelVerdict], ...]

    @property
    def tree_text(self) -> str:
        return format_tree_text(self.tree)

    def export(self, format: str) -> str:
        return export(self.tree, format)

    def verdict_documents(self) -> list[dict]:
        docs = []
        for rule, verdict in self.verdicts:
            doc = {"rule": str(rule), "holds": verdict.holds,
                   "exact": verdict.exact}
            if verdict.witness is not None:
                doc["witness"] = list(verdict.witness)
            docs.append(doc)
        return docs


def top_level_cut(log: EventLog, rules: list[DeclareRule],
                  params: DiscoveryParams) -> Cut | None:
    """The cut the recursion picks at its root, for reporting."""
    core = EventLog({t: c for t, c in log.variants.items() if t})
    if len(core.alphabet) < 2:
        return None
    dfg = build_dfg(core)
    scoped = scope_rules(rules, core.alphabet)
    return select_cut(enumerate_cuts(dfg), dfg, scoped, params.sup, params.workers)


def run_discovery(log: EventLog, rules: list[DeclareRule],
                  params: DiscoveryParams | None = None,
                  loop_bound: int = 2, max_len: int = 8) -> DiscoveryRun:
    """Discover a tree and verify every input rule on its bounded language."""
    params = params or DiscoveryParams()
    tree = discover(log, rules, params)
    verdicts = tuple(
        (rule, model_satisfies(rule, tree, loop_bound, max_len))
        for rule in rules
    )
    return DiscoveryRun(tree, top_level_cut(log, rules, params), verdicts)


def rule_check_rows(log: EventLog, rules: list[DeclareRule]) -> list[dict]:
    """Per-rule confidence rows for reports and the rules-check command."""
    return [
        {"rule": str(rule), "template": rule.template, "args": list(rule.args),
         "confidence": confidence(rule, log)}
        for rule in rules
    ]
