"""HTTP API behavior: status codes, gating, durable writes, export."""

import pytest
from fastapi.testclient import TestClient

from fsmrag.config import AgentConfig
from fsmrag.fsm import run
from fsmrag.service import create_app
from fsmrag.store import TrajectoryStore

from conftest import band_backend, band_gold


@pytest.fixture
def client_and_store(tmp_path, band_kb):
    store = TrajectoryStore(tmp_path / "store")
    gold = band_gold()
    _, traj = run(gold.question, band_kb, band_backend(), AgentConfig(subquery_cap=2),
                  question_id=gold.question_id)
    tid = store.add_trajectory(traj.to_dict(), iteration=1)
    client = TestClient(create_app(store))
    return client, store, tid


def llm_indices(store, tid):
    return [i for i, s in enumerate(store.get(tid)["steps"]) if s["is_llm"]]


def test_list_pending(client_and_store):
    client, _, tid = client_and_store
    r = client.get("/api/trajectories?status=pending")
    assert r.status_code == 200
    body = r.json()
    assert body["total"] == 1
    assert body["items"][0]["trajectory_id"] == tid
    assert body["items"][0]["annotated"] == 0


def test_get_trajectory_includes_steps_and_renders(client_and_store):
    client, _, tid = client_and_store
    r = client.get(f"/api/trajectories/{tid}")
    assert r.status_code == 200
    body = r.json()
    assert body["steps"][0]["module"] == "decompose"
    assert "Main Question:" in body["steps"][0]["input_render"]


def test_get_unknown_is_404(client_and_store):
    client, _, _ = client_and_store
    assert client.get("/api/trajectories/nope").status_code == 404


def test_feedback_validation_codes(client_and_store):
    client, store, tid = client_and_store
    llm = llm_indices(store, tid)
    tool = next(i for i, s in enumerate(store.get(tid)["steps"]) if not s["is_llm"])
    ok = client.post(f"/api/trajectories/{tid}/steps/{llm[0]}/feedback", json={"verdict": "right"})
    assert ok.status_code == 200
    empty_refine = client.post(
        f"/api/trajectories/{tid}/steps/{llm[1]}/feedback",
        json={"verdict": "refine", "refinement": ""},
    )
    assert empty_refine.status_code == 400
    on_tool = client.post(
        f"/api/trajectories/{tid}/steps/{tool}/feedback", json={"verdict": "right"}
    )
    assert on_tool.status_code == 400
    missing = client.post("/api/trajectories/nope/steps/0/feedback", json={"verdict": "right"})
    assert missing.status_code == 404


def test_finalize_409_lists_pending(client_and_store):
    client, store, tid = client_and_store
    llm = llm_indices(store, tid)
    client.post(f"/api/trajectories/{tid}/steps/{llm[0]}/feedback", json={"verdict": "right"})
    r = client.post(f"/api/trajectories/{tid}/finalize")
    assert r.status_code == 409
    assert r.json()["pending"] == llm[1:]


def test_full_annotation_then_export(client_and_store):
    client, store, tid = client_and_store
    for i in llm_indices(store, tid):
        r = client.post(f"/api/trajectories/{tid}/steps/{i}/feedback", json={"verdict": "right"})
        assert r.status_code == 200
    assert client.post(f"/api/trajectories/{tid}/finalize").status_code == 200
    export = client.get("/api/export?iteration=1")
    assert export.status_code == 200
    lines = [l for l in export.text.split("\n") if l]
    assert len(lines) == len(llm_indices(store, tid))
    other = client.get("/api/export?iteration=2")
    assert other.text == ""


def test_writes_survive_restart(client_and_store, tmp_path):
    client, store, tid = client_and_store
    llm = llm_indices(store, tid)
    client.post(f"/api/trajectories/{tid}/steps/{llm[0]}/feedback",
                json={"verdict": "refine", "refinement": "[Irrelevant]"})
    reopened = TrajectoryStore(store.root)
    fb = reopened.get_feedback(tid, llm[0])
    assert fb.kind == "refine" and fb.text == "[Irrelevant]"


def test_token_gates_writes(tmp_path, band_kb):
    store = TrajectoryStore(tmp_path / "s2")
    gold = band_gold()
    _, traj = run(gold.question, band_kb, band_backend(), AgentConfig(subquery_cap=2),
                  question_id=gold.question_id)
    tid = store.add_trajectory(traj.to_dict())
    client = TestClient(create_app(store, token="sekrit"))
    llm0 = llm_indices(store, tid)[0]
    denied = client.post(f"/api/trajectories/{tid}/steps/{llm0}/feedback", json={"verdict": "right"})
    assert denied.status_code == 401
    allowed = client.post(
        f"/api/trajectories/{tid}/steps/{llm0}/feedback",
        json={"verdict": "right"},
        headers={"X-Auth-Token": "sekrit"},
    )
    assert allowed.status_code == 200
    # reads stay open
    assert client.get("/api/trajectories").status_code == 200
