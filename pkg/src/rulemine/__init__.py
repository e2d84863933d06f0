"""Rule-guided process discovery toolkit.

Discovers block-structured process models from event logs while enforcing
declarative rules sourced from files, from log mining, or from an
LLM-mediated dialogue with a domain expert.
"""

from .declare import (DeclareRule, ValidationReport, check_trace, confidence,
                      format_rules, mine_rules, parse_rules, validate_rules)
from .discovery import (Cut, DiscoveryParams, discover, enumerate_cuts,
                        forces_violation, cut_cost, select_cut, pass_down_rules)
from .event_log import (Dfg, EventLog, build_dfg, format_variants,
                        parse_csv_log, parse_variants, project_log, split_log)
from .model_io import (BoundedLanguage, ModelVerdict, WorkflowNet, accepts,
                       enumerate_language, export, format_tree_text,
                       model_satisfies, parse_tree_text, to_workflow_net)
from .tree import ProcessTree, activity, loop, parallel, sequence, silent, xor

__version__ = "0.1.0"

__all__ = [
    "DeclareRule", "ValidationReport", "check_trace", "confidence",
    "format_rules", "mine_rules", "parse_rules", "validate_rules",
    "Cut", "DiscoveryParams", "discover", "enumerate_cuts", "forces_violation",
    "cut_cost", "select_cut", "pass_down_rules",
    "Dfg", "EventLog", "build_dfg", "format_variants", "parse_csv_log",
    "parse_variants", "project_log", "split_log",
    "BoundedLanguage", "ModelVerdict", "WorkflowNet", "accepts",
    "enumerate_language", "export", "format_tree_text", "model_satisfies",
    "parse_tree_text", "to_workflow_net",
    "ProcessTree", "activity", "loop", "parallel", "sequence", "silent", "xor",
    "__version__",
]
