"""Command-line interface: discovery, rule checking/mining, extraction, serving.

Exit codes: 0 success, 2 parse failure (unreadable inputs), 3 validation
failure (rules vs log alphabet), 4 transport failure (LLM unreachable or
repair exhausted), 5 internal error.
"""

from __future__ import annotations

import functools
import sys
from pathlib import Path

import click

from .declare import (EmptyLog, RuleError, ValidationReport, confidence,
                      format_rules, mine_rules, parse_rules, validate_rules)
from .discovery import DiscoveryParams
from .event_log import CsvColumns, EventLog, LogError, parse_csv_log, parse_variants
from .llm_bridge import (HttpTransport, RefinementSession, RepairExhausted,
                         ScriptedTransport, TransportFailure)
from .model_io import EXPORT_FORMATS, TreeTextError
from .pipeline import run_discovery
from .store import Store

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_TRANSPORT = 4
EXIT_INTERNAL = 5


class ValidationFailure(Exception):
    def __init__(self, report: ValidationReport):
        super().__init__("rule validation failed")
        self.report = report


def guarded(fn):
    """Map errors to the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ValidationFailure as exc:
            _print_report(exc.report)
            sys.exit(EXIT_VALIDATION)
        except (LogError, RuleError, TreeTextError, OSError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_PARSE)
        except RepairExhausted as exc:
            click.echo(f"error: {exc}", err=True)
            _print_report(exc.report)
            sys.exit(EXIT_TRANSPORT)
        except TransportFailure as exc:
            click.echo(f"transport error: {exc}", err=True)
            sys.exit(EXIT_TRANSPORT)
        except (click.ClickException, SystemExit):
            raise
        except Exception as exc:  # pragma: no cover - defensive
            click.echo(f"internal error: {type(exc).__name__}: {exc}", err=True)
            sys.exit(EXIT_INTERNAL)

    return wrapper


def _print_report(report: ValidationReport) -> None:
    for item in report.items:
        line = f"{item.severity}: [{item.kind}] {item.message}"
        if item.suggestion:
            line += f" (did you mean {item.suggestion!r}?)"
        click.echo(line, err=True)


def load_log(path: str, log_format: str, columns: CsvColumns) -> EventLog:
    text = Path(path).read_text(encoding="utf-8")
    if log_format == "auto":
        log_format = "csv" if path.endswith(".csv") else "variants"
    if log_format == "csv":
        return parse_csv_log(text, columns)
    return parse_variants(text)


def load_rules(path: str | None):
    if path is None:
        return []
    return parse_rules(Path(path).read_text(encoding="utf-8"))


def validated_rules(path: str | None, log: EventLog):
    rules = load_rules(path)
    if rules:
        report = validate_rules(rules, log.alphabet)
        if not report.verdict:
            raise ValidationFailure(report)
    return rules


def log_options(fn):
    fn = click.option("--log", "log_path", required=True,
                      type=click.Path(exists=True, dir_okay=False),
                      help="Event log file (variants format, or CSV).")(fn)
    fn = click.option("--log-format", type=click.Choice(["auto", "csv", "variants"]),
                      default="auto", show_default=True)(fn)
    fn = click.option("--case-col", default="case_id", show_default=True)(fn)
    fn = click.option("--activity-col", default="activity", show_default=True)(fn)
    fn = click.option("--time-col", default="timestamp", show_default=True)(fn)
    return fn


def _columns(case_col: str, activity_col: str, time_col: str) -> CsvColumns:
    return CsvColumns(case_col, activity_col, time_col)


@click.group()
def main():
    """Rule-guided process discovery toolkit."""


@main.command()
@log_options
@click.option("--rules", "rules_path", type=click.Path(exists=True, dir_okay=False),
              help="Declarative rules file.")
@click.option("--sup", type=click.FloatRange(0.0, 1.0), default=0.2, show_default=True,
              help="Missing-edge penalty scale.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False),
              help="Write the exported model here (defaults to stdout).")
@click.option("--format", "export_format", type=click.Choice(EXPORT_FORMATS),
              default="tree-text", show_default=True)
@click.option("--report-dir", type=click.Path(file_okay=False),
              help="Also write summary.csv and rendered figures here.")
@click.option("--strict-discharge", is_flag=True, default=False,
              help="Inject existence rules when discharging response/precedence.")
@click.option("--workers", type=click.IntRange(1, 64), default=1, show_default=True)
@click.option("--loop-bound", type=click.IntRange(0, 16), default=2, show_default=True,
              help="Loop unrolling bound for rule verification.")
@click.option("--max-len", type=click.IntRange(0, 64), default=8, show_default=True,
              help="Trace length cap for rule verification.")
@guarded
def discover(log_path, log_format, case_col, activity_col, time_col, rules_path,
             sup, out_path, export_format, report_dir, strict_discharge, workers,
             loop_bound, max_len):
    """Discover a process model from a log under declarative rules."""
    log = load_log(log_path, log_format, _columns(case_col, activity_col, time_col))
    rules = validated_rules(rules_path, log)
    params = DiscoveryParams(sup=sup, strict_discharge=strict_discharge,
                             workers=workers)
    run = run_discovery(log, rules, params, loop_bound, max_len)

    click.echo(f"activities: {len(log.alphabet)}")
    click.echo(f"variants: {len(log.variants)} ({log.total_traces} traces)")
    click.echo(f"top-level cut: {run.top_cut if run.top_cut else 'none (base case or fall-through)'}")
    for rule, verdict in run.verdicts:
        click.echo(f"rule {rule}: {verdict}")

    exported = run.export(export_format)
    if out_path:
        Path(out_path).write_text(exported if exported.endswith("\n")
                                  else exported + "\n", encoding="utf-8")
        click.echo(f"model written to {out_path}")
    else:
        click.echo(exported)

    if report_dir:
        from .report import write_report

        created = write_report(report_dir, log, run)
        for path in created:
            click.echo(f"report: {path}")


@main.group()
def rules():
    """Check or mine declarative rules against a log."""


@rules.command()
@log_options
@click.option("--rules", "rules_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@guarded
def check(log_path, log_format, case_col, activity_col, time_col, rules_path):
    """Print confidence and validation verdicts for each rule."""
    log = load_log(log_path, log_format, _columns(case_col, activity_col, time_col))
    rule_list = load_rules(rules_path)
    report = validate_rules(rule_list, log.alphabet)
    _print_report(report)
    for rule in rule_list:
        click.echo(f"{rule}: confidence {confidence(rule, log):.3f}")
    if not report.verdict:
        sys.exit(EXIT_VALIDATION)


@rules.command()
@log_options
@click.option("--min-confidence", type=click.FloatRange(0.0, 1.0, min_open=True),
              default=1.0, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False))
@guarded
def mine(log_path, log_format, case_col, activity_col, time_col, min_confidence,
         out_path):
    """List every rule holding on the log at the confidence threshold."""
    log = load_log(log_path, log_format, _columns(case_col, activity_col, time_col))
    try:
        mined = mine_rules(log, min_confidence)
    except EmptyLog as exc:
        raise click.UsageError(str(exc))
    text = format_rules(mined)
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
        click.echo(f"{len(mined)} rules written to {out_path}")
    else:
        click.echo(text, nl=False)


@main.command()
@log_options
@click.option("--description", "description_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Business context / feedback text for the LLM.")
@click.option("--transcript", "transcript_path",
              type=click.Path(exists=True, dir_okay=False),
              help="Scripted transport transcript (offline mode).")
@click.option("--answers", "answer_paths", multiple=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Prepared answer files for clarifying questions (in order).")
@click.option("--interactive", is_flag=True, default=False,
              help="Answer the LLM's questions on the console.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True,
              help="Write the validated rules file here.")
@click.option("--max-repairs", type=click.IntRange(1, 10), default=3, show_default=True)
@guarded
def extract(log_path, log_format, case_col, activity_col, time_col,
            description_path, transcript_path, answer_paths, interactive,
            out_path, max_repairs):
    """Extract validated rules from a textual process description via an LLM."""
    log = load_log(log_path, log_format, _columns(case_col, activity_col, time_col))
    transport = (ScriptedTransport.from_file(transcript_path) if transcript_path
                 else HttpTransport())
    session = RefinementSession(
        session_id="cli", alphabet=tuple(sorted(log.alphabet)),
        transport=transport, max_repairs=max_repairs)

    outcome = session.propose_rules(
        Path(description_path).read_text(encoding="utf-8"))
    answers = list(answer_paths)
    while outcome.questions is not None:
        click.echo("the assistant asks:")
        for question in outcome.questions:
            click.echo(f"  - {question}")
        if answers:
            reply = Path(answers.pop(0)).read_text(encoding="utf-8")
        elif interactive:
            reply = click.prompt("answers")
        else:
            raise TransportFailure(
                "the assistant asked questions; provide --answers files or "
                "run with --interactive")
        outcome = session.propose_rules(reply)

    text = format_rules(outcome.rules)
    Path(out_path).write_text(text, encoding="utf-8")
    click.echo(f"{len(outcome.rules)} validated rules written to {out_path}")
    for item in outcome.report.warnings:
        click.echo(f"warning: {item.message}", err=True)


@main.command()
@log_options
@click.option("--rules", "rules_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--sup", type=click.FloatRange(0.0, 1.0), default=0.2, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False),
              help="Report directory (CSV summary + figures + model exports).")
@click.option("--loop-bound", type=click.IntRange(0, 16), default=2, show_default=True)
@click.option("--max-len", type=click.IntRange(0, 64), default=8, show_default=True)
@guarded
def report(log_path, log_format, case_col, activity_col, time_col, rules_path,
           sup, out_dir, loop_bound, max_len):
    """Discover a model and write the full report bundle."""
    from .report import write_report

    log = load_log(log_path, log_format, _columns(case_col, activity_col, time_col))
    rule_list = validated_rules(rules_path, log)
    run = run_discovery(log, rule_list, DiscoveryParams(sup=sup),
                        loop_bound, max_len)
    for path in write_report(out_dir, log, run):
        click.echo(f"report: {path}")


@main.command()
@click.option("--data-dir", required=True, type=click.Path(file_okay=False))
@click.option("--bind", default="127.0.0.1:8000", show_default=True,
              help="host:port to listen on.")
@guarded
def serve(data_dir, bind):
    """Run the refinement HTTP service."""
    import uvicorn

    from .service import create_app

    Store(data_dir)  # create the layout early so failures surface before bind
    host, _, port = bind.partition(":")
    uvicorn.run(create_app(data_dir), host=host or "127.0.0.1",
                port=int(port or 8000))


if __name__ == "__main__":
    main()
