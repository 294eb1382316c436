"""HTTP service: session lifecycle, trace slicing, SSE stream, store eviction."""

from __future__ import annotations

import json
import socket
import threading
import time

import httpx
import pytest
import uvicorn

from adl.runtime import create_session, post_user_message
from adl.server import SessionStore, create_app

from conftest import load_corpus, corpus_path
from adl.providers import ScriptedProvider


def _free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


class LiveServer:
    def __init__(self, app):
        self.port = _free_port()
        self._server = uvicorn.Server(
            uvicorn.Config(app, host="127.0.0.1", port=self.port, log_level="error")
        )
        self._thread = threading.Thread(target=self._server.run, daemon=True)

    def __enter__(self):
        self._thread.start()
        deadline = time.time() + 10
        while not self._server.started:
            if time.time() > deadline:
                raise RuntimeError("server did not start")
            time.sleep(0.02)
        return httpx.Client(base_url=f"http://127.0.0.1:{self.port}", timeout=30)

    def __exit__(self, *exc):
        self._server.should_exit = True
        self._thread.join(timeout=10)


@pytest.fixture
def bench_app(bench_program, bench_provider):
    return create_app(bench_program, provider=bench_provider, default_strategy="merging")


def test_session_lifecycle(bench_app):
    with LiveServer(bench_app) as client:
        created = client.post("/api/sessions", json={})
        assert created.status_code == 201
        body = created.json()
        assert isinstance(body["id"], str) and isinstance(body["greeting"], list)
        sid = body["id"]

        reply = client.post(
            f"/api/sessions/{sid}/messages",
            json={"text": "Can you recommend a good fantasy novel?"},
        )
        assert reply.status_code == 200
        doc = reply.json()
        assert doc["bot"] == [
            "I recommend The Name of the Wind by Patrick Rothfuss, a beloved fantasy novel."
        ]
        assert doc["terminated"] is False
        assert doc["metrics"]["provider_calls"] == 2  # merging: selector + merged call
        assert doc["metrics"]["token_cost"] > 0
        turns = {e["turn"] for e in doc["trace"]}
        assert len(turns) == 1  # only this turn's events

        state = client.get(f"/api/sessions/{sid}/state").json()
        assert state["strategy"] == "merging"
        assert state["active_agent"] is not None
        assert state["transcript"][0]["role"] in ("user", "bot")
        assert state["terminated"] is False


def test_strategy_override_and_validation(bench_app):
    with LiveServer(bench_app) as client:
        ok = client.post("/api/sessions", json={"strategy": "autonomous"})
        assert ok.status_code == 201
        sid = ok.json()["id"]
        state = client.get(f"/api/sessions/{sid}/state").json()
        assert state["strategy"] == "autonomous"

        bad = client.post("/api/sessions", json={"strategy": "psychic"})
        assert bad.status_code == 400
        assert bad.json()["error"]["code"] == "E_STRATEGY_UNKNOWN"


def test_error_envelopes(bench_app):
    with LiveServer(bench_app) as client:
        missing = client.post("/api/sessions/ghost/messages", json={"text": "hi"})
        assert missing.status_code == 404
        assert missing.json()["error"]["code"] == "E_NO_SESSION"

        sid = client.post("/api/sessions", json={}).json()["id"]
        malformed = client.post(f"/api/sessions/{sid}/messages", json={"txt": "hi"})
        assert malformed.status_code == 400
        assert malformed.json()["error"]["code"] == "E_FORMAT"


def test_program_endpoint(bench_app, bench_program):
    with LiveServer(bench_app) as client:
        doc = client.get("/api/program").json()
        names = [a["name"] for a in doc["agents"]]
        assert names == list(bench_program.agent_names)
        assert all(a["type"].endswith(" agent") for a in doc["agents"])
        assert set(doc["graph"]) == {"nodes", "edges", "cycles", "truncated"}


def test_sse_stream(bench_app):
    with LiveServer(bench_app) as client:
        sid = client.post("/api/sessions", json={}).json()["id"]
        client.post(
            f"/api/sessions/{sid}/messages",
            json={"text": "I want to order two copies of Dune."},
        )
        events = []
        with client.stream("GET", f"/api/events/{sid}") as stream:
            for line in stream.iter_lines():
                if line.startswith("data: "):
                    events.append(json.loads(line[len("data: ") :]))
                if len(events) >= 5:
                    break
        kinds = {e["kind"] for e in events}
        assert "agent_invoked" in kinds or "user_message" in kinds
        assert all({"seq", "turn", "kind", "payload"} <= set(e) for e in events)


def test_api_matches_direct_runtime(bench_program):
    turns = [
        "I want to order two copies of Dune.",
        "Can you recommend a good fantasy novel?",
    ]

    def provider():
        return ScriptedProvider.from_file(corpus_path("bench_rules.yaml"))

    direct = create_session(bench_program, provider=provider(), strategy="proactive")
    expected = [post_user_message(direct, t).bot_messages for t in turns]

    app = create_app(bench_program, provider=provider(), default_strategy="proactive")
    with LiveServer(app) as client:
        sid = client.post("/api/sessions", json={}).json()["id"]
        got = [
            client.post(f"/api/sessions/{sid}/messages", json={"text": t}).json()["bot"]
            for t in turns
        ]
    assert got == expected


def test_store_lru_and_idle_eviction(bench_program, bench_provider):
    store = SessionStore(capacity=2, idle_timeout_s=0.2)
    for _ in range(3):
        store.add(create_session(bench_program, provider=bench_provider))
    assert len(store) == 2  # oldest evicted by capacity
    time.sleep(0.25)
    session = create_session(bench_program, provider=bench_provider)
    store.add(session)
    assert len(store) == 1  # idle entries swept
    assert store.get(session.id) is not None
    assert store.get("nope") is None
