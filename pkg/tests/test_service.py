"""HTTP service: session lifecycle, events, artifacts and feedback."""

from __future__ import annotations

import json
import re
import time

import pytest
from fastapi.testclient import TestClient

from autotopo.agents.intent import benchmark_query
from autotopo.service.app import create_app

CANTILEVER = benchmark_query("cantilever")


@pytest.fixture(scope="module")
def client(tmp_path_factory):
    app = create_app(tmp_path_factory.mktemp("service"))
    with TestClient(app) as c:
        yield c


def create_session(client, **config) -> str:
    response = client.post("/sessions", json=config)
    assert response.status_code == 201
    body = response.json()
    assert body["state"] == "idle"
    return body["id"]


def wait_done(client, session_id, timeout=180.0) -> dict:
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        info = client.get(f"/sessions/{session_id}").json()
        if info["state"] != "running":
            return info
        time.sleep(0.2)
    raise TimeoutError(f"session {session_id} still running after {timeout}s")


def sse_events(client, session_id, since=0) -> list[dict]:
    frames = []
    with client.stream(
        "GET",
        f"/sessions/{session_id}/events",
        params={"since": since},
        headers={"accept": "text/event-stream"},
    ) as response:
        assert response.status_code == 200
        assert response.headers["content-type"].startswith("text/event-stream")
        current_id = None
        for line in response.iter_lines():
            if line.startswith("id: "):
                current_id = int(line[4:])
            elif line.startswith("data: "):
                payload = json.loads(line[6:])
                assert payload["seq"] == current_id
                frames.append(payload)
    return frames


@pytest.fixture(scope="module")
def completed(client) -> str:
    """One finished cantilever session shared by the read-only tests."""
    session_id = create_session(client)
    response = client.post(f"/sessions/{session_id}/query", json={"query": CANTILEVER})
    assert response.status_code == 202
    assert response.json()["state"] == "running"
    info = wait_done(client, session_id)
    assert info["state"] == "awaiting_feedback"
    return session_id


class TestLifecycle:
    def test_session_ids_are_sequential(self, client):
        first = create_session(client)
        second = create_session(client)
        assert re.fullmatch(r"s\d{4}", first)
        assert int(second[1:]) == int(first[1:]) + 1

    def test_unknown_session_is_404_everywhere(self, client):
        for method, url, body in (
            ("GET", "/sessions/zzz", None),
            ("POST", "/sessions/zzz/query", {"query": "x"}),
            ("POST", "/sessions/zzz/feedback", {"feedback": "x"}),
            ("GET", "/sessions/zzz/events", None),
            ("GET", "/sessions/zzz/artifacts/report.md", None),
            ("GET", "/sessions/zzz/report", None),
        ):
            response = client.request(method, url, json=body)
            assert response.status_code == 404, url

    def test_completed_session_snapshot(self, client, completed):
        info = client.get(f"/sessions/{completed}").json()
        assert info["state"] == "awaiting_feedback"
        assert info["last_outcome"] == "accepted"
        assert info["counters"]["user_cycles"] == 0

    def test_query_on_a_busy_session_conflicts(self, client, completed):
        response = client.post(
            f"/sessions/{completed}/query", json={"query": CANTILEVER}
        )
        assert response.status_code == 409
        assert "awaiting_feedback" in response.json()["detail"]

    def test_feedback_on_an_idle_session_conflicts(self, client):
        session_id = create_session(client)
        response = client.post(
            f"/sessions/{session_id}/feedback", json={"feedback": "add a hole"}
        )
        assert response.status_code == 409

    def test_report_before_any_result_conflicts(self, client):
        session_id = create_session(client)
        assert client.get(f"/sessions/{session_id}/report").status_code == 409

    def test_nonsense_query_aborts_the_session(self, client):
        session_id = create_session(client)
        client.post(f"/sessions/{session_id}/query", json={"query": "build a spaceship"})
        info = wait_done(client, session_id)
        assert info["state"] == "aborted"
        assert info["last_outcome"] == "aborted"
        assert "benchmark" in info["reason"]
        # an aborted session accepts no further queries
        response = client.post(
            f"/sessions/{session_id}/query", json={"query": CANTILEVER}
        )
        assert response.status_code == 409

    def test_empty_mock_transcript_aborts(self, client):
        session_id = create_session(client, personas="mock", transcript=[])
        client.post(f"/sessions/{session_id}/query", json={"query": CANTILEVER})
        info = wait_done(client, session_id)
        assert info["state"] == "aborted"

    def test_unknown_persona_mode_surfaces_as_an_error(self, client):
        session_id = create_session(client, personas="oracle")
        client.post(f"/sessions/{session_id}/query", json={"query": CANTILEVER})
        info = wait_done(client, session_id)
        assert info["state"] == "aborted"
        assert "persona mode" in info["error"]


class TestEvents:
    def test_polling_returns_the_full_ordered_log(self, client, completed):
        body = client.get(f"/sessions/{completed}/events").json()
        events = body["events"]
        assert [e["seq"] for e in events] == list(range(1, len(events) + 1))
        assert events[0]["kind"] == "formulated"
        assert events[-1]["kind"] == "accepted"
        assert body["last_seq"] == events[-1]["seq"]
        assert body["state"] == "awaiting_feedback"

    def test_polling_since_resumes_mid_log(self, client, completed):
        full = client.get(f"/sessions/{completed}/events").json()
        tail = client.get(f"/sessions/{completed}/events", params={"since": 3}).json()
        assert [e["seq"] for e in tail["events"]] == [
            e["seq"] for e in full["events"] if e["seq"] > 3
        ]
        empty = client.get(
            f"/sessions/{completed}/events", params={"since": full["last_seq"]}
        ).json()
        assert empty["events"] == []
        assert empty["last_seq"] == full["last_seq"]

    def test_sse_replay_matches_the_polled_log(self, client, completed):
        polled = client.get(f"/sessions/{completed}/events").json()["events"]
        streamed = sse_events(client, completed)
        assert streamed == polled

    def test_sse_resumes_from_since(self, client, completed):
        streamed = sse_events(client, completed, since=5)
        assert streamed[0]["seq"] == 6

    def test_cross_origin_requests_are_allowed(self, client, completed):
        response = client.get(
            f"/sessions/{completed}", headers={"origin": "http://localhost:5173"}
        )
        assert response.status_code == 200
        assert response.headers["access-control-allow-origin"] == "*"

    def test_sse_resumes_from_last_event_id_header(self, client, completed):
        # EventSource reconnects send the header instead of a query parameter
        frames = []
        with client.stream(
            "GET",
            f"/sessions/{completed}/events",
            headers={"accept": "text/event-stream", "last-event-id": "5"},
        ) as response:
            for line in response.iter_lines():
                if line.startswith("data: "):
                    frames.append(json.loads(line[6:]))
        assert frames[0]["seq"] == 6

    def test_sse_follows_a_live_session(self, client):
        session_id = create_session(client)
        client.post(f"/sessions/{session_id}/query", json={"query": CANTILEVER})
        streamed = sse_events(client, session_id)  # returns when the run ends
        kinds = [e["kind"] for e in streamed]
        assert kinds[0] == "formulated"
        assert kinds[-1] == "accepted"
        seqs = [e["seq"] for e in streamed]
        assert seqs == list(range(1, len(seqs) + 1))
        assert wait_done(client, session_id)["state"] == "awaiting_feedback"


class TestArtifacts:
    def test_density_image_is_served_as_png(self, client, completed):
        response = client.get(f"/sessions/{completed}/artifacts/density_v1.png")
        assert response.status_code == 200
        assert response.headers["content-type"] == "image/png"
        assert response.content[:8] == b"\x89PNG\r\n\x1a\n"

    def test_plan_and_history_media_types(self, client, completed):
        response = client.get(f"/sessions/{completed}/artifacts/plan_v1.json")
        assert response.status_code == 200
        assert response.headers["content-type"].startswith("application/json")
        assert "params" in response.json()
        response = client.get(f"/sessions/{completed}/artifacts/history_v1.csv")
        assert response.headers["content-type"].startswith("text/csv")

    def test_unknown_and_traversal_names_are_404(self, client, completed):
        for name in ("density_v9.png", "nope.txt", "..%2Fevents.ndjson"):
            response = client.get(f"/sessions/{completed}/artifacts/{name}")
            assert response.status_code == 404, name

    def test_report_endpoint_serves_markdown(self, client, completed):
        response = client.get(f"/sessions/{completed}/report")
        assert response.status_code == 200
        assert response.headers["content-type"].startswith("text/markdown")
        assert response.text.startswith("# Optimization report")


class TestFeedback:
    def test_feedback_runs_a_second_cycle(self, client, completed):
        before = client.get(f"/sessions/{completed}/events").json()["last_seq"]
        response = client.post(
            f"/sessions/{completed}/feedback", json={"feedback": "add a hole please"}
        )
        assert response.status_code == 202
        info = wait_done(client, completed)
        assert info["state"] == "awaiting_feedback"
        assert info["counters"]["user_cycles"] == 1

        events = client.get(f"/sessions/{completed}/events").json()["events"]
        accepted = [e for e in events if e["kind"] == "accepted"]
        assert len(accepted) == 2
        assert accepted[-1]["seq"] > before
        # the revised formulation carries the requested hole
        spec_versions = [
            e["payload"]["version"] for e in events if e["kind"] == "formulated"
        ]
        latest = client.get(
            f"/sessions/{completed}/artifacts/spec_v{max(spec_versions)}.json"
        ).json()
        assert latest["geometry"]["void_regions"]
