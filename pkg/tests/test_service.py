import pytest
from fastapi.testclient import TestClient

from rulemine.service import create_app

from conftest import read
from test_llm_bridge import QUESTIONS_REPLY, rules_reply


@pytest.fixture()
def client(tmp_path):
    app = create_app(str(tmp_path / "data"))
    with TestClient(app) as test_client:
        test_client.data_dir = str(tmp_path / "data")
        yield test_client


def upload_case_log(client) -> str:
    response = client.post("/logs", json={
        "name": "claims", "format": "variants",
        "content": read("case_study_log.variants")})
    assert response.status_code == 201
    return response.json()["id"]


def scripted_session(client, log_id, responses, sup=0.2) -> str:
    response = client.post("/sessions", json={
        "log_id": log_id, "sup": sup,
        "transport": {"kind": "queue", "responses": responses}})
    assert response.status_code == 201
    return response.json()["id"]


def test_upload_and_activities(client, motivating_log):
    response = client.post("/logs", json={
        "format": "variants", "content": read("motivating_log.variants")})
    assert response.status_code == 201
    log_id = response.json()["id"]
    activities = client.get(f"/logs/{log_id}/activities").json()["activities"]
    assert len(activities) == 6
    assert sorted(motivating_log.alphabet) == activities


def test_upload_bad_content_is_structured_error(client):
    response = client.post("/logs", json={"format": "variants", "content": "x;y\n"})
    assert response.status_code == 400
    assert response.json()["error"] == "BadCount"


def test_unknown_ids_are_not_found(client):
    assert client.get("/logs/nope/activities").status_code == 404
    assert client.get("/sessions/nope").status_code == 404


def test_full_scripted_session_two_iterations(client):
    log_id = upload_case_log(client)
    session_id = scripted_session(client, log_id, [
        QUESTIONS_REPLY,
        rules_reply(read("case_study_initial_rules.txt")),
        rules_reply(read("case_study_feedback_rules.txt")),
    ])

    context = client.post(f"/sessions/{session_id}/context",
                          json={"text": read("case_study_context.txt")})
    assert context.status_code == 200
    assert len(context.json()["questions"]) == 3

    answers = client.post(f"/sessions/{session_id}/answers",
                          json={"text": read("case_study_answers.txt")})
    assert answers.status_code == 200
    assert len(answers.json()["rules"]) == 17

    first = client.post(f"/sessions/{session_id}/discover", json={})
    assert first.status_code == 200
    assert first.json()["iteration"] == 0

    feedback = client.post(f"/sessions/{session_id}/feedback",
                           json={"text": read("case_study_feedback.txt")})
    assert feedback.status_code == 200
    assert len(feedback.json()["rules"]) == 22

    second = client.post(f"/sessions/{session_id}/discover", json={})
    assert second.json()["iteration"] == 1

    model0 = client.get(f"/sessions/{session_id}/model", params={"iteration": 0})
    model1 = client.get(f"/sessions/{session_id}/model", params={"iteration": 1})
    assert model0.status_code == model1.status_code == 200
    assert len(model0.json()["rules"]) == 17
    assert len(model1.json()["rules"]) == 22
    assert model0.json()["dot"].startswith("digraph")

    transcript = client.get(f"/sessions/{session_id}/transcript").json()["transcript"]
    assert [m["speaker"] for m in transcript[:2]] == ["expert", "assistant"]
    reports = client.get(f"/sessions/{session_id}/validation").json()["reports"]
    assert reports and all(r["verdict"] == "pass" for r in reports)

    rules_view = client.get(f"/sessions/{session_id}/rules").json()["rules"]
    assert len(rules_view) == 22
    assert all(row["confidence"] == 1.0 for row in rules_view)


def test_restart_preserves_sessions(client):
    log_id = upload_case_log(client)
    session_id = scripted_session(client, log_id,
                                  [rules_reply("at-most(Correct Claim)")])
    client.post(f"/sessions/{session_id}/context", json={"text": "the context"})
    client.post(f"/sessions/{session_id}/discover", json={})
    before_rules = client.get(f"/sessions/{session_id}/rules").json()
    before_model = client.get(f"/sessions/{session_id}/model").json()

    with TestClient(create_app(client.data_dir)) as restarted:
        after_rules = restarted.get(f"/sessions/{session_id}/rules").json()
        after_model = restarted.get(f"/sessions/{session_id}/model").json()
    assert after_rules == before_rules
    assert after_model == before_model


def test_disabled_rule_excluded_from_discovery(client):
    log_id = upload_case_log(client)
    session_id = scripted_session(client, log_id, [
        rules_reply("at-most(Correct Claim)\nat-most(Withdraw Claim)")])
    client.post(f"/sessions/{session_id}/context", json={"text": "the context"})

    edit = client.put(f"/sessions/{session_id}/rules", json={"rules": [
        {"text": "at-most(Correct Claim)", "enabled": False},
        {"text": "at-most(Withdraw Claim)", "enabled": True},
    ]})
    assert edit.status_code == 200
    run = client.post(f"/sessions/{session_id}/discover", json={}).json()
    assert [v["rule"] for v in run["verdicts"]] == ["at-most(Withdraw Claim)"]


def test_rule_edit_with_unknown_label_is_rejected(client):
    log_id = upload_case_log(client)
    session_id = scripted_session(client, log_id,
                                  [rules_reply("at-most(Correct Claim)")])
    client.post(f"/sessions/{session_id}/context", json={"text": "the context"})
    bad = client.put(f"/sessions/{session_id}/rules", json={"rules": [
        {"text": "at-most(Correct Claimm)", "enabled": True}]})
    assert bad.status_code == 422
    report = bad.json()["report"]
    assert report["verdict"] == "fail"
    assert report["items"][0]["suggestion"] == "Correct Claim"
    # the stored rule set is unchanged
    rules_view = client.get(f"/sessions/{session_id}/rules").json()["rules"]
    assert [row["rule"] for row in rules_view] == ["at-most(Correct Claim)"]


def test_idempotent_discover_retry(client):
    log_id = upload_case_log(client)
    session_id = scripted_session(client, log_id,
                                  [rules_reply("at-most(Correct Claim)")])
    client.post(f"/sessions/{session_id}/context", json={"text": "the context"})
    headers = {"Idempotency-Key": "retry-1"}
    first = client.post(f"/sessions/{session_id}/discover", json={}, headers=headers)
    second = client.post(f"/sessions/{session_id}/discover", json={}, headers=headers)
    assert first.json() == second.json()
    view = client.get(f"/sessions/{session_id}").json()
    assert view["iterations"] == 1


def test_repair_exhaustion_surfaces_as_structured_error(client):
    log_id = upload_case_log(client)
    session_id = scripted_session(
        client, log_id, [rules_reply("always-after(a, b)")] * 4)
    response = client.post(f"/sessions/{session_id}/context",
                           json={"text": "the context"})
    assert response.status_code == 502
    body = response.json()
    assert body["error"] == "repair-exhausted"
    assert body["report"]["verdict"] == "fail"


def test_transport_failure_is_structured(client):
    log_id = upload_case_log(client)
    session_id = scripted_session(client, log_id, [])  # exhausted immediately
    response = client.post(f"/sessions/{session_id}/context",
                           json={"text": "the context"})
    assert response.status_code == 502
    assert response.json()["error"] == "transport"


def test_upload_csv_log(client):
    response = client.post("/logs", json={"format": "csv", "content": (
        "case_id,activity,timestamp\n"
        "c1,Receive Claim,2024-01-01T08:00:00\n"
        "c1,Accept Claim,2024-01-01T09:00:00\n")})
    assert response.status_code == 201
    assert response.json()["activities"] == ["Accept Claim", "Receive Claim"]


def test_service_discovery_matches_cli_byte_for_byte(client, tmp_path):
    from click.testing import CliRunner

    from conftest import DATA
    from rulemine.cli import main

    log_id = client.post("/logs", json={
        "format": "variants",
        "content": read("motivating_log.variants")}).json()["id"]
    session_id = scripted_session(client, log_id, [
        rules_reply("\n".join(
            line for line in read("motivating_rules.txt").splitlines()
            if line and not line.startswith("#")))])
    client.post(f"/sessions/{session_id}/context", json={"text": "the context"})
    service_run = client.post(f"/sessions/{session_id}/discover", json={}).json()

    out_text = tmp_path / "model.txt"
    out_dot = tmp_path / "model.dot"
    runner = CliRunner()
    for path, fmt in [(out_text, "tree-text"), (out_dot, "graph-dot")]:
        result = runner.invoke(main, [
            "discover", "--log", str(DATA / "motivating_log.variants"),
            "--rules", str(DATA / "motivating_rules.txt"),
            "--sup", "0.2", "--out", str(path), "--format", fmt])
        assert result.exit_code == 0, result.output
    assert service_run["tree_text"] + "\n" == out_text.read_text(encoding="utf-8")
    assert service_run["dot"] == out_dot.read_text(encoding="utf-8")
