import json

import pytest
from fastapi.testclient import TestClient

from slidetrace.service import create_app
from test_review import DRAFT_PANELS, make_clock


@pytest.fixture
def data_dir(tmp_path):
    sessions = tmp_path / "sessions"
    sessions.mkdir()
    tasks = [
        {"case_id": "case-7", "roi_index": i, "roi_crop": f"crops/S1/roi{i}.png", **DRAFT_PANELS}
        for i in range(2)
    ]
    (sessions / "rev-a.json").write_text(json.dumps({"session_id": "rev-a", "tasks": tasks}))
    (tmp_path / "crops").mkdir()
    (tmp_path / "crops" / "thumb.png").write_bytes(b"\x89PNG\r\n\x1a\nfake")
    return tmp_path


@pytest.fixture
def client(data_dir):
    return TestClient(create_app(data_dir, clock=make_clock(step=12_000)))


class TestNext:
    def test_serves_first_task(self, client):
        body = client.get("/api/session/rev-a/next").json()
        assert body["roi_index"] == 0
        assert body["progress"] == "1 of 2"
        assert len(body["draft"]["sentences"]) == 7

    def test_unknown_session_404(self, client):
        assert client.get("/api/session/ghost/next").status_code == 404

    def test_exhaustion_reports_no_pending(self, client):
        for _ in range(2):
            task = client.get("/api/session/rev-a/next").json()
            client.post(
                "/api/session/rev-a/decision", json={"task_id": task["task_id"], "verdict": "accepted"}
            )
        response = client.get("/api/session/rev-a/next")
        assert response.status_code == 404
        assert response.json()["detail"] == "no_pending_tasks"


class TestDecision:
    def test_accept_roundtrip(self, client):
        task = client.get("/api/session/rev-a/next").json()
        response = client.post(
            "/api/session/rev-a/decision", json={"task_id": task["task_id"], "verdict": "accepted"}
        )
        assert response.status_code == 200
        event = response.json()
        assert event["verdict"] == "accepted"
        assert event["decided_at_ms"] - event["served_at_ms"] == 12_000

    def test_deletion_promoted_to_edited(self, client):
        task = client.get("/api/session/rev-a/next").json()
        event = client.post(
            "/api/session/rev-a/decision",
            json={"task_id": task["task_id"], "verdict": "accepted", "deleted_indices": [2]},
        ).json()
        assert event["verdict"] == "edited"

    def test_stale_conflict(self, client):
        task = client.get("/api/session/rev-a/next").json()
        client.post("/api/session/rev-a/decision", json={"task_id": task["task_id"], "verdict": "accepted"})
        response = client.post(
            "/api/session/rev-a/decision", json={"task_id": task["task_id"], "verdict": "accepted"}
        )
        assert response.status_code == 409

    def test_bad_indices_400(self, client):
        task = client.get("/api/session/rev-a/next").json()
        response = client.post(
            "/api/session/rev-a/decision",
            json={"task_id": task["task_id"], "verdict": "accepted", "deleted_indices": [99]},
        )
        assert response.status_code == 400


class TestExport:
    def test_export_is_replayable_jsonl(self, client):
        task = client.get("/api/session/rev-a/next").json()
        client.post(
            "/api/session/rev-a/decision",
            json={"task_id": task["task_id"], "verdict": "rejected"},
        )
        text = client.get("/api/session/rev-a/export").text
        lines = [json.loads(line) for line in text.splitlines()]
        assert len(lines) == 1
        assert lines[0]["verdict"] == "rejected"


class TestClientContract:
    # field set the browser client's ReviewTask type relies on
    def test_next_task_shape(self, client):
        body = client.get("/api/session/rev-a/next").json()
        assert set(body) >= {
            "task_id",
            "case_id",
            "roi_index",
            "progress",
            "thumbnail",
            "roi_box",
            "roi_crop",
            "cyto_crop",
            "draft",
            "panel_sentence_counts",
            "served_at_ms",
        }
        assert set(body["draft"]) == {
            "thumbnail_impression",
            "why_zoom",
            "findings",
            "sentences",
            "source",
        }
        assert len(body["panel_sentence_counts"]) == 3

    def test_decision_event_shape(self, client):
        task = client.get("/api/session/rev-a/next").json()
        event = client.post(
            "/api/session/rev-a/decision", json={"task_id": task["task_id"], "verdict": "accepted"}
        ).json()
        assert set(event) == {
            "task_id",
            "roi_index",
            "verdict",
            "deleted_indices",
            "edited_sentences",
            "served_at_ms",
            "decided_at_ms",
            "reviewer_id",
        }


class TestAuth:
    def test_token_required_when_configured(self, data_dir, monkeypatch):
        monkeypatch.setenv("REVIEW_TOKEN", "sekrit")
        client = TestClient(create_app(data_dir, token_env="REVIEW_TOKEN"))
        assert client.get("/api/session/rev-a/next").status_code == 401
        ok = client.get("/api/session/rev-a/next", headers={"Authorization": "Bearer sekrit"})
        assert ok.status_code == 200

    def test_static_crops_served(self, client):
        assert client.get("/crops/thumb.png").status_code == 200
