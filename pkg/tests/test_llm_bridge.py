import pytest

from rulemine.declare import DeclareRule, TEMPLATE_MEANING, format_rules
from rulemine.discovery import DiscoveryParams, discover
from rulemine.llm_bridge import (Message, MultipleBlocks, PromptBundle,
                                 QueueTransport, RecordingTransport,
                                 RefinementSession, RepairExhausted,
                                 ScriptedTransport, SessionStateError,
                                 TransportFailure, UnbalancedTags,
                                 build_task_prompt, extract_tagged,
                                 parse_questions, request_digest)

from conftest import read

QUESTIONS_REPLY = """Before proposing constraints I need a few answers.
[QUESTIONS]
Can Block Claim 1, Block Claim 2, and Block Claim 3 happen within the same claim, or do they exclude each other?
Is each unblock step tied strictly to its own block step, and does the block always come first?
Do Receive Objection 1 and Receive Objection 2 follow a fixed order, or can either occur on its own?
[/QUESTIONS]"""


def rules_reply(text: str) -> str:
    return f"Here is the constraint set.\n[RULES]\n{text.strip()}\n[/RULES]\nLet me know about any issues."


def make_case_session(responses, case_study_log, max_repairs=3):
    return RefinementSession(
        session_id="s1",
        alphabet=tuple(sorted(case_study_log.alphabet)),
        transport=QueueTransport(responses),
        max_repairs=max_repairs,
    )


# -- prompt assembly -----------------------------------------------------------

def test_prompt_lists_all_templates_with_exact_meanings(motivating_log):
    messages = build_task_prompt(sorted(motivating_log.alphabet))
    system = messages[0]
    assert system.speaker == "system"
    for name, meaning in TEMPLATE_MEANING.items():
        assert f"{name}(" in system.content
        assert meaning in system.content
    for label in motivating_log.alphabet:
        assert label in system.content


def test_prompt_response_meaning_is_exact():
    messages = build_task_prompt(["x"])
    assert "If a occurs, then b occurs after a." in messages[0].content


def test_prompt_without_few_shots_keeps_catalog():
    messages = build_task_prompt(["x"], PromptBundle(few_shots=()))
    assert len(messages) == 1
    assert "not-co-existence" in messages[0].content


def test_prompt_few_shots_are_message_pairs():
    messages = build_task_prompt(["x"])
    assert [m.speaker for m in messages[1:]] == ["expert", "assistant"] * 2
    assert "[RULES]" in messages[2].content


# -- tag extraction ---------------------------------------------------------------

def test_extract_rules_block(data_dir):
    reply = rules_reply(read("motivating_rules.txt").replace("# Constraints for the claim-application log, labels as recorded.\n", ""))
    blocks = extract_tagged(reply)
    assert blocks.questions_block is None
    assert len(blocks.rules_block.splitlines()) == 4


def test_extract_questions_only():
    blocks = extract_tagged(QUESTIONS_REPLY)
    assert blocks.rules_block is None
    assert len(parse_questions(blocks.questions_block)) == 3


def test_extract_unbalanced():
    with pytest.raises(UnbalancedTags):
        extract_tagged("[RULES]\nexistence(a)\n")


def test_extract_multiple_blocks():
    with pytest.raises(MultipleBlocks):
        extract_tagged("[RULES]\na\n[/RULES]\n[RULES]\nb\n[/RULES]")


def test_parse_questions_strips_markers():
    block = "- first?\n2. second?\nQ3: third?"
    assert parse_questions(block) == ["first?", "second?", "third?"]


# -- proposal flow ------------------------------------------------------------------

def test_context_round_returns_questions(case_study_log):
    session = make_case_session([QUESTIONS_REPLY], case_study_log)
    outcome = session.propose_rules(read("case_study_context.txt"))
    assert outcome.questions is not None
    assert len(outcome.questions) == 3
    assert session.state == "awaiting-answers"
    assert session.current_rules == []


def test_answers_round_yields_validated_rules(case_study_log,
                                              case_study_initial_rules):
    responses = [QUESTIONS_REPLY, rules_reply(read("case_study_initial_rules.txt"))]
    session = make_case_session(responses, case_study_log)
    session.propose_rules(read("case_study_context.txt"))
    outcome = session.propose_rules(read("case_study_answers.txt"))
    assert outcome.rules == case_study_initial_rules
    assert outcome.report.verdict
    assert session.state == "validated"
    assert len(session.current_rules) == 17


def test_feedback_extends_rule_set(case_study_log, case_study_initial_rules,
                                   case_study_feedback_rules):
    responses = [
        QUESTIONS_REPLY,
        rules_reply(read("case_study_initial_rules.txt")),
        rules_reply(read("case_study_feedback_rules.txt")),
    ]
    session = make_case_session(responses, case_study_log)
    session.propose_rules(read("case_study_context.txt"))
    session.propose_rules(read("case_study_answers.txt"))
    tree = discover(case_study_log, session.enabled_rules(), DiscoveryParams())
    session.add_model_iteration(session.enabled_rules(), 0.2, tree)

    outcome = session.integrate_feedback(read("case_study_feedback.txt"))
    assert len(session.current_rules) == 22
    assert [e.rule for e in session.current_rules] == (
        case_study_initial_rules + case_study_feedback_rules)
    assert outcome.report.verdict
    # the grounding message shows the latest model
    assert any("Current discovered model" in m.content
               for m in session.transcript if m.speaker == "system")


def test_feedback_duplicate_is_dropped_with_warning(case_study_log):
    responses = [
        rules_reply("at-most(Correct Claim)"),
        rules_reply("at-most(Correct Claim)\nat-most(Withdraw Claim)"),
    ]
    session = make_case_session(responses, case_study_log)
    session.propose_rules("context")
    tree = discover(case_study_log, session.enabled_rules(), DiscoveryParams())
    session.add_model_iteration(session.enabled_rules(), 0.2, tree)
    outcome = session.integrate_feedback("feedback")
    assert [e.rule for e in session.current_rules] == [
        DeclareRule("at-most", ("Correct Claim",)),
        DeclareRule("at-most", ("Withdraw Claim",)),
    ]
    assert any(item.kind == "DuplicateRule" for item in outcome.report.warnings)


def test_feedback_requires_model(case_study_log):
    session = make_case_session([rules_reply("at-most(Correct Claim)")],
                                case_study_log)
    session.propose_rules("context")
    with pytest.raises(SessionStateError):
        session.integrate_feedback("feedback")


def test_context_round_replaces_previous_rules(case_study_log):
    responses = [
        rules_reply("at-most(Correct Claim)"),
        rules_reply("at-most(Withdraw Claim)"),
    ]
    session = make_case_session(responses, case_study_log)
    session.propose_rules("first context")
    session.state = "context-given"  # expert reopens the context round
    session.propose_rules("second context")
    assert [e.rule for e in session.current_rules] == [
        DeclareRule("at-most", ("Withdraw Claim",))]


# -- repair loop -----------------------------------------------------------------------

def drifted_rules_block():
    return rules_reply(read("motivating_rules_drifted.txt"))


def clean_rules_block():
    text = read("motivating_rules.txt")
    return rules_reply("\n".join(
        line for line in text.splitlines() if line and not line.startswith("#")))


def make_motivating_session(responses, motivating_log, max_repairs=3):
    return RefinementSession(
        session_id="m1", alphabet=tuple(sorted(motivating_log.alphabet)),
        transport=QueueTransport(responses), max_repairs=max_repairs)


def test_repair_fixes_unknown_template_then_label_drift(motivating_log,
                                                        motivating_rules):
    responses = [
        rules_reply("always-after(A-created, A-canceled)"),
        drifted_rules_block(),
        clean_rules_block(),
    ]
    session = make_motivating_session(responses, motivating_log)
    outcome = session.propose_rules(read("motivating_feedback.txt"))
    assert outcome.rules == motivating_rules
    assert session.state == "validated"
    repair_messages = [m for m in session.transcript if m.speaker == "system"]
    assert len(repair_messages) == 2
    # the second repair message names the drifted label and the suggestion
    assert "A-cancelled" in repair_messages[1].content
    assert "A-canceled" in repair_messages[1].content


def test_repair_message_cites_arity(motivating_log):
    responses = [rules_reply("response(A-created)"), clean_rules_block()]
    session = make_motivating_session(responses, motivating_log)
    session.propose_rules("context")
    (repair,) = [m for m in session.transcript if m.speaker == "system"]
    assert "ArityMismatch" in repair.content
    assert "2" in repair.content


def test_repair_exhaustion_after_three_attempts(motivating_log):
    responses = [rules_reply("always-after(a, b)")] * 4
    session = make_motivating_session(responses, motivating_log)
    with pytest.raises(RepairExhausted) as err:
        session.propose_rules("context")
    assert err.value.attempts == 3
    assert not err.value.report.verdict
    assert session.current_rules == []
    assert session.state == "repairing"
    # initial + three repair proposals were all consumed
    assert isinstance(session.transport, QueueTransport)
    assert session.transport.responses == []


def test_session_can_retry_after_exhaustion(motivating_log, motivating_rules):
    responses = [rules_reply("always-after(a, b)")] * 4 + [clean_rules_block()]
    session = make_motivating_session(responses, motivating_log)
    with pytest.raises(RepairExhausted):
        session.propose_rules("context")
    outcome = session.propose_rules("please use only the listed templates")
    assert outcome.rules == motivating_rules


# -- atomicity and replay ----------------------------------------------------------------

def test_transport_failure_rolls_back_turn(motivating_log):
    session = make_motivating_session([], motivating_log)  # exhausted queue
    before = (session.state, len(session.transcript), list(session.current_rules))
    with pytest.raises(TransportFailure):
        session.propose_rules("context")
    assert (session.state, len(session.transcript), list(session.current_rules)) == before


def test_record_and_replay_reproduces_rules(tmp_path, motivating_log,
                                            motivating_rules):
    responses = [rules_reply("always-after(A-created, A-canceled)"),
                 drifted_rules_block(), clean_rules_block()]
    recorder = RecordingTransport(QueueTransport(responses))
    recorded = RefinementSession(
        session_id="rec", alphabet=tuple(sorted(motivating_log.alphabet)),
        transport=recorder)
    recorded.propose_rules(read("motivating_feedback.txt"))
    path = tmp_path / "session.jsonl"
    recorder.save(str(path))

    replayed = RefinementSession(
        session_id="rep", alphabet=tuple(sorted(motivating_log.alphabet)),
        transport=ScriptedTransport.from_file(str(path)))
    outcome = replayed.propose_rules(read("motivating_feedback.txt"))
    assert outcome.rules == motivating_rules
    assert [e.rule for e in replayed.current_rules] == [
        e.rule for e in recorded.current_rules]
    assert replayed.transcript == recorded.transcript


def test_scripted_transport_rejects_divergence(motivating_log):
    transport = ScriptedTransport([(request_digest([Message("expert", "other")]),
                                    "canned")])
    session = RefinementSession(
        session_id="div", alphabet=tuple(sorted(motivating_log.alphabet)),
        transport=transport)
    with pytest.raises(TransportFailure):
        session.propose_rules("context")


def test_scripted_transport_wildcard_digest():
    transport = ScriptedTransport([("*", "reply")])
    assert transport.send([Message("expert", "anything")]) == "reply"
    with pytest.raises(TransportFailure):
        transport.send([Message("expert", "again")])
