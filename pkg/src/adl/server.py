"""HTTP chat service exposing sessions over a small JSON API plus a
server-sent-event trace stream.  Sessions live in memory with LRU eviction
and an idle timeout; each session's turns are serialized by a lock while
distinct sessions proceed in parallel."""

from __future__ import annotations

import asyncio
import json
import threading
import time
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, StreamingResponse

from .analyzer import build_call_graph, detect_cycles, graph_to_json
from .errors import AdlError, SessionError
from .model import Program
from .providers import Provider
from .runtime import Session, SessionConfig, create_session, post_user_message
from .runtime.session import STRATEGIES
from .toolbridge import ToolHost

LRU_CAPACITY = 1000
IDLE_TIMEOUT_S = 300.0
SSE_POLL_S = 0.15


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": {"code": code, "message": message}})


@dataclass
class _Entry:
    session: Session
    lock: threading.Lock = field(default_factory=threading.Lock)
    last_used: float = field(default_factory=time.monotonic)


class SessionStore:
    """In-memory LRU of live sessions with an idle timeout."""

    def __init__(self, capacity: int = LRU_CAPACITY, idle_timeout_s: float = IDLE_TIMEOUT_S):
        self.capacity = capacity
        self.idle_timeout_s = idle_timeout_s
        self._entries: "OrderedDict[str, _Entry]" = OrderedDict()
        self._lock = threading.Lock()

    def add(self, session: Session) -> None:
        with self._lock:
            self._sweep()
            self._entries[session.id] = _Entry(session=session)
            self._entries.move_to_end(session.id)
            while len(self._entries) > self.capacity:
                self._entries.popitem(last=False)

    def get(self, session_id: str) -> Optional[_Entry]:
        with self._lock:
            self._sweep()
            entry = self._entries.get(session_id)
            if entry is None:
                return None
            entry.last_used = time.monotonic()
            self._entries.move_to_end(session_id)
            return entry

    def _sweep(self) -> None:
        now = time.monotonic()
        stale = [k for k, e in self._entries.items() if now - e.last_used > self.idle_timeout_s]
        for k in stale:
            del self._entries[k]

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)


def _event_dict(event) -> dict:
    return json.loads(event.to_json())


def _metrics_dict(metrics) -> dict:
    return {
        "token_cost": metrics.token_cost,
        "latency_ms": metrics.latency_ms,
        "provider_calls": metrics.provider_calls,
    }


def create_app(
    program: Program,
    provider: Optional[Provider] = None,
    tool_host: Optional[ToolHost] = None,
    default_strategy: str = "proactive",
    config: Optional[SessionConfig] = None,
    static_dir: Optional[str] = None,
    store: Optional[SessionStore] = None,
) -> FastAPI:
    app = FastAPI(title="adl", docs_url=None, redoc_url=None)
    sessions = store if store is not None else SessionStore()
    app.state.sessions = sessions

    @app.exception_handler(RequestValidationError)
    async def _on_validation(_req: Request, exc: RequestValidationError):
        return _error(400, "E_FORMAT", str(exc.errors()[:1]))

    @app.exception_handler(AdlError)
    async def _on_adl_error(_req: Request, exc: AdlError):
        status = 409 if isinstance(exc, SessionError) else 500
        return _error(status, exc.code, exc.message)

    @app.post("/api/sessions", status_code=201)
    async def create_session_endpoint(request: Request):
        try:
            body = await request.json()
        except Exception:
            body = {}
        if not isinstance(body, dict):
            return _error(400, "E_FORMAT", "request body must be a JSON object")
        strategy = body.get("strategy") or default_strategy
        if strategy not in STRATEGIES:
            return _error(400, "E_STRATEGY_UNKNOWN", f"unknown strategy {strategy!r}")
        session = await asyncio.to_thread(
            create_session,
            program,
            strategy=strategy,
            provider=provider,
            tool_host=tool_host,
            config=config,
        )
        sessions.add(session)
        greeting = [text for role, text in session.transcript if role == "bot"]
        return JSONResponse(status_code=201, content={"id": session.id, "greeting": greeting})

    @app.post("/api/sessions/{session_id}/messages")
    async def post_message(session_id: str, request: Request):
        entry = sessions.get(session_id)
        if entry is None:
            return _error(404, "E_NO_SESSION", f"no session {session_id!r}")
        try:
            body = await request.json()
        except Exception:
            return _error(400, "E_FORMAT", "request body must be JSON")
        text = body.get("text") if isinstance(body, dict) else None
        if not isinstance(text, str) or not text:
            return _error(400, "E_FORMAT", 'request body must be {"text": str}')

        def run_turn():
            with entry.lock:
                return post_user_message(entry.session, text)

        try:
            result = await asyncio.to_thread(run_turn)
        except SessionError as exc:
            return _error(409, exc.code, exc.message)
        session = entry.session
        turn = session.turn_index
        trace = [_event_dict(e) for e in session.trace if e.turn == turn]
        return {
            "bot": result.bot_messages,
            "terminated": result.terminated,
            "trace": trace,
            "metrics": _metrics_dict(session.turn_metrics[-1]),
        }

    @app.get("/api/sessions/{session_id}/state")
    async def get_state(session_id: str):
        entry = sessions.get(session_id)
        if entry is None:
            return _error(404, "E_NO_SESSION", f"no session {session_id!r}")
        snapshot = entry.session.get_state()
        return {
            "active_agent": snapshot.active_agent,
            "args": snapshot.args,
            "transcript": [{"role": role, "text": text} for role, text in snapshot.transcript],
            "last_turn_metrics": (
                _metrics_dict(snapshot.last_turn_metrics) if snapshot.last_turn_metrics else None
            ),
            "terminated": entry.session.terminated,
            "strategy": entry.session.strategy,
        }

    @app.get("/api/program")
    async def get_program():
        graph = build_call_graph(program)
        cycles = detect_cycles(graph)
        return {
            "agents": [
                {
                    "name": a.name,
                    "type": f"{a.kind} agent",
                    "description": a.header.description,
                }
                for a in program.agents
            ],
            "graph": graph_to_json(graph, cycles),
        }

    @app.get("/api/events/{session_id}")
    async def stream_events(session_id: str, request: Request):
        entry = sessions.get(session_id)
        if entry is None:
            return _error(404, "E_NO_SESSION", f"no session {session_id!r}")

        async def generate():
            cursor = 0
            while True:
                if await request.is_disconnected():
                    return
                trace = entry.session.trace
                while cursor < len(trace):
                    yield f"data: {trace[cursor].to_json()}\n\n"
                    cursor += 1
                if entry.session.terminated:
                    return
                await asyncio.sleep(SSE_POLL_S)

        return StreamingResponse(generate(), media_type="text/event-stream")

    if static_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="console")

    return app
