"""HTTP service exposing design sessions.

One session = one workspace directory + one memory, driven through the
states ``idle -> running -> awaiting_feedback | aborted`` (feedback on
an accepted result re-enters ``running``).  The pipeline executes on a
worker thread per session; clients follow progress through the event
endpoint, which serves either a JSON snapshot or a live SSE stream.
"""

from __future__ import annotations

import json
import queue
import tempfile
import threading
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import (
    FileResponse,
    JSONResponse,
    PlainTextResponse,
    StreamingResponse,
)
from pydantic import BaseModel

from ..agents.memory import SessionMemory
from ..agents.pipeline import (
    PipelineOutcome,
    PipelinePolicy,
    build_personas,
    run_pipeline,
)
from ..workspace import SessionWorkspace

_MEDIA_TYPES = {
    ".json": "application/json",
    ".csv": "text/csv",
    ".png": "image/png",
    ".md": "text/markdown",
    ".ndjson": "application/x-ndjson",
}

_POLL_INTERVAL = 0.2


class CreateSessionRequest(BaseModel):
    personas: str = "deterministic"
    transcript: list[str] = []
    seed: int = 0
    timing: str = "none"


class QueryRequest(BaseModel):
    query: str


class FeedbackRequest(BaseModel):
    feedback: str


@dataclass
class SessionRecord:
    id: str
    workspace: SessionWorkspace
    config: CreateSessionRequest
    state: str = "idle"
    query: str | None = None
    memory: SessionMemory | None = None
    outcome: PipelineOutcome | None = None
    error: str | None = None
    thread: threading.Thread | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)

    def snapshot(self) -> dict:
        with self.lock:
            info = {"id": self.id, "state": self.state}
            if self.outcome is not None:
                info["last_outcome"] = self.outcome.status
                info["reason"] = self.outcome.reason
            if self.memory is not None:
                info["counters"] = dict(self.memory.counters)
            if self.error is not None:
                info["error"] = self.error
            return info


class SessionManager:
    def __init__(self, base_dir: Path):
        self.base_dir = base_dir
        self._sessions: dict[str, SessionRecord] = {}
        self._lock = threading.Lock()
        self._counter = 0

    def create(self, config: CreateSessionRequest) -> SessionRecord:
        with self._lock:
            self._counter += 1
            session_id = f"s{self._counter:04d}"
            workspace = SessionWorkspace(self.base_dir / session_id)
            record = SessionRecord(id=session_id, workspace=workspace, config=config)
            self._sessions[session_id] = record
            return record

    def get(self, session_id: str) -> SessionRecord:
        with self._lock:
            record = self._sessions.get(session_id)
        if record is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return record


def _run_cycle(record: SessionRecord, query: str, feedback: str | None) -> None:
    try:
        outcome = run_pipeline(
            query,
            record.workspace,
            policy=PipelinePolicy(
                seed=record.config.seed, timing=record.config.timing
            ),
            personas=build_personas(
                record.config.personas, tuple(record.config.transcript)
            ),
            memory=record.memory,
            feedback=feedback,
        )
        with record.lock:
            record.memory = outcome.memory
            record.outcome = outcome
            record.state = (
                "awaiting_feedback" if outcome.status == "accepted" else "aborted"
            )
    except Exception as exc:  # surface crashes as an aborted session
        with record.lock:
            record.error = str(exc)
            record.state = "aborted"


def _start_cycle(record: SessionRecord, query: str, feedback: str | None) -> None:
    thread = threading.Thread(
        target=_run_cycle, args=(record, query, feedback), daemon=True
    )
    record.thread = thread
    thread.start()


def _sse_frame(event) -> str:
    return f"id: {event.seq}\ndata: {json.dumps(event.to_dict(), sort_keys=True)}\n\n"


def _sse_stream(record: SessionRecord, since: int):
    events = record.workspace.events
    pending: queue.Queue = queue.Queue()
    events.subscribe(pending.put)
    try:
        last = since
        for event in events.since(since):
            yield _sse_frame(event)
            last = event.seq
        while True:
            with record.lock:
                state = record.state
            try:
                event = pending.get(timeout=_POLL_INTERVAL)
            except queue.Empty:
                if state != "running":
                    return
                continue
            if event.seq > last:
                yield _sse_frame(event)
                last = event.seq
    finally:
        events.unsubscribe(pending.put)


def create_app(base_dir: str | Path | None = None) -> FastAPI:
    base = Path(base_dir) if base_dir else Path(tempfile.mkdtemp(prefix="autotopo_"))
    base.mkdir(parents=True, exist_ok=True)
    app = FastAPI(title="autotopo")
    # the browser client is served separately from the API host
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    manager = SessionManager(base)
    app.state.manager = manager

    @app.post("/sessions", status_code=201)
    def create_session(config: CreateSessionRequest) -> dict:
        record = manager.create(config)
        return {"id": record.id, "state": record.state}

    @app.get("/sessions/{session_id}")
    def session_info(session_id: str) -> dict:
        return manager.get(session_id).snapshot()

    @app.post("/sessions/{session_id}/query", status_code=202)
    def submit_query(session_id: str, body: QueryRequest) -> dict:
        record = manager.get(session_id)
        with record.lock:
            if record.state != "idle":
                raise HTTPException(
                    status_code=409,
                    detail=f"session is {record.state}, expected idle",
                )
            record.state = "running"
            record.query = body.query
        _start_cycle(record, body.query, feedback=None)
        return {"id": record.id, "state": "running"}

    @app.post("/sessions/{session_id}/feedback", status_code=202)
    def submit_feedback(session_id: str, body: FeedbackRequest) -> dict:
        record = manager.get(session_id)
        with record.lock:
            if record.state != "awaiting_feedback":
                raise HTTPException(
                    status_code=409,
                    detail=f"session is {record.state}, expected awaiting_feedback",
                )
            record.state = "running"
        _start_cycle(record, record.query, feedback=body.feedback)
        return {"id": record.id, "state": "running"}

    @app.get("/sessions/{session_id}/events")
    def events(session_id: str, request: Request, since: int = 0):
        record = manager.get(session_id)
        if "text/event-stream" in request.headers.get("accept", ""):
            # EventSource reconnects resend the last delivered id as a header
            header = request.headers.get("last-event-id")
            if since == 0 and header is not None:
                try:
                    since = int(header)
                except ValueError:
                    pass
            return StreamingResponse(
                _sse_stream(record, since), media_type="text/event-stream"
            )
        batch = [e.to_dict() for e in record.workspace.events.since(since)]
        with record.lock:
            state = record.state
        return JSONResponse(
            {
                "events": batch,
                "last_seq": batch[-1]["seq"] if batch else since,
                "state": state,
            }
        )

    @app.get("/sessions/{session_id}/artifacts/{name}")
    def artifact(session_id: str, name: str):
        record = manager.get(session_id)
        try:
            path = record.workspace.artifact_path(name)
        except (KeyError, FileNotFoundError):
            raise HTTPException(status_code=404, detail=f"no artifact {name!r}")
        media = _MEDIA_TYPES.get(path.suffix, "application/octet-stream")
        return FileResponse(path, media_type=media)

    @app.get("/sessions/{session_id}/report")
    def report(session_id: str):
        record = manager.get(session_id)
        path = record.workspace.root / "report.md"
        if not path.is_file():
            raise HTTPException(
                status_code=409, detail="session has no accepted result yet"
            )
        return PlainTextResponse(
            path.read_text(encoding="utf-8"), media_type="text/markdown"
        )

    return app
