"""Session API for interactive steering.

Thin HTTP shell over AnytimeSession: create, advance, inspect, select a
branch, edit the condition, fetch the anytime result, plus a websocket
stream that replays a session's event backlog and then follows it live.

Error mapping is total: malformed input 400 (or 422 from body validation),
unknown session 404, phase violations and busy sessions 409, capacity 503.
Sessions live in memory; an optional per-session append-only event log
supports offline replay.  One mutation runs at a time per session; readers
are never blocked.
"""

from __future__ import annotations

import asyncio
import json
import os
import threading
import uuid
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .configio import (
    build_condition,
    build_plan,
    build_prior,
    build_schedule,
    plan_config,
)
from .errors import ParameterError, StateError
from .nested import (
    AnytimeSession,
    PredictionEvent,
    anytime_result,
    session_advance,
    session_create,
    session_edit_condition,
    session_select,
)


class CreateRequest(BaseModel):
    prior: dict
    schedule: dict
    plan: dict
    branches: int = 1
    seed: int = 0


class AdvanceRequest(BaseModel):
    stride: int | None = None


class SelectRequest(BaseModel):
    branch: int


class ConditionRequest(BaseModel):
    kind: str = "unconditional"
    label: int | None = None
    scale: float = 1.0


@dataclass
class _Record:
    session: AnytimeSession
    created_at: str
    lock: threading.Lock = field(default_factory=threading.Lock)
    log: object | None = None


class _NotFound(Exception):
    pass


class _Busy(Exception):
    pass


class SessionStore:
    """In-memory session table with per-session single-writer locks."""

    def __init__(self, max_sessions: int, event_log_dir: str | None):
        self.max_sessions = max_sessions
        self.event_log_dir = event_log_dir
        self._records: dict[str, _Record] = {}
        self._table_lock = threading.Lock()

    def create(self, session: AnytimeSession) -> str:
        with self._table_lock:
            if len(self._records) >= self.max_sessions:
                raise _CapacityError(
                    f"session capacity {self.max_sessions} reached"
                )
            sid = uuid.uuid4().hex
            record = _Record(
                session=session,
                created_at=datetime.now(timezone.utc).isoformat(),
            )
            if self.event_log_dir is not None:
                os.makedirs(self.event_log_dir, exist_ok=True)
                record.log = open(
                    os.path.join(self.event_log_dir, f"{sid}.jsonl"),
                    "a",
                    encoding="utf-8",
                )
            self._records[sid] = record
            return sid

    def get(self, sid: str) -> _Record:
        record = self._records.get(sid)
        if record is None:
            raise _NotFound(f"unknown session {sid}")
        return record

    def close_all(self):
        with self._table_lock:
            for record in self._records.values():
                if record.log is not None:
                    record.log.close()
                    record.log = None


class _CapacityError(Exception):
    pass


def _descriptor(sid: str, record: _Record) -> dict:
    s = record.session
    return {
        "id": sid,
        "plan": plan_config(s.plan),
        "n_branches": s.n_branches,
        "nfe_count": s.nfe_count,
        "phase": s.phase,
        "outer_index": s.outer_index,
        "created_at": record.created_at,
    }


def _event_payload(sid: str, ev: PredictionEvent) -> dict:
    return {
        "session": sid,
        "branch": ev.branch,
        "nfe": ev.nfe,
        "outer_step": ev.outer_step,
        "t": ev.t,
        "values": [float(v) for v in ev.x0_hat],
        "boundary": ev.boundary,
    }


def create_app(
    max_sessions: int = 64,
    event_log_dir: str | None = None,
    static_dir: str | None = None,
) -> FastAPI:
    store = SessionStore(max_sessions, event_log_dir)

    @asynccontextmanager
    async def _lifespan(_: FastAPI):
        yield
        store.close_all()

    app = FastAPI(title="anytime nested sampling service", lifespan=_lifespan)
    app.state.store = store

    @app.exception_handler(ParameterError)
    async def _bad_request(request, exc):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(StateError)
    async def _conflict(request, exc):
        return JSONResponse(status_code=409, content={"detail": str(exc)})

    @app.exception_handler(_NotFound)
    async def _not_found(request, exc):
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    @app.exception_handler(_Busy)
    async def _busy(request, exc):
        return JSONResponse(status_code=409, content={"detail": str(exc)})

    @app.exception_handler(_CapacityError)
    async def _capacity(request, exc):
        return JSONResponse(status_code=503, content={"detail": str(exc)})

    def _mutate(sid: str):
        """Context manager enforcing one mutation in flight per session."""
        record = store.get(sid)

        class _Guard:
            def __enter__(self):
                if not record.lock.acquire(blocking=False):
                    raise _Busy(f"session {sid} has a mutation in flight")
                return record

            def __exit__(self, *exc):
                record.lock.release()
                return False

        return _Guard()

    def _log_events(sid: str, record: _Record, events):
        if record.log is None:
            return
        for ev in events:
            record.log.write(json.dumps(_event_payload(sid, ev)) + "\n")
        record.log.flush()

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "sessions": len(store._records)}

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateRequest):
        if body.branches < 1:
            raise ParameterError(f"branches must be >= 1, got {body.branches}")
        schedule = build_schedule(body.schedule)
        prior = build_prior(body.prior)
        plan = build_plan(body.plan, schedule)
        session = session_create(prior, schedule, plan, body.branches, body.seed)
        sid = store.create(session)
        return _descriptor(sid, store.get(sid))

    @app.get("/sessions/{sid}")
    def describe(sid: str):
        return _descriptor(sid, store.get(sid))

    @app.post("/sessions/{sid}/advance")
    def advance(sid: str, body: AdvanceRequest | None = None):
        with _mutate(sid) as record:
            stride = None if body is None else body.stride
            events = session_advance(record.session, stride)
            _log_events(sid, record, events)
        return _descriptor(sid, record)

    @app.post("/sessions/{sid}/select")
    def select(sid: str, body: SelectRequest):
        with _mutate(sid) as record:
            session_select(record.session, body.branch)
        return _descriptor(sid, record)

    @app.post("/sessions/{sid}/condition")
    def edit_condition(sid: str, body: ConditionRequest):
        with _mutate(sid) as record:
            condition = build_condition(body.model_dump())
            session_edit_condition(record.session, condition)
        return _descriptor(sid, record)

    @app.get("/sessions/{sid}/result")
    def result(sid: str, branch: int = 0):
        record = store.get(sid)
        values = anytime_result(record.session, branch)
        return {
            "nfe_count": record.session.nfe_count,
            "branch": branch,
            "values": [float(v) for v in values],
        }

    @app.websocket("/sessions/{sid}/events")
    async def events(ws: WebSocket, sid: str):
        await ws.accept()
        try:
            record = store.get(sid)
        except _NotFound as exc:
            await ws.send_json({"type": "error", "detail": str(exc)})
            await ws.close(code=1008)
            return
        session = record.session
        cursor = 0
        try:
            while True:
                backlog = session.events
                while cursor < len(backlog):
                    await ws.send_json(
                        {"type": "event", **_event_payload(sid, backlog[cursor])}
                    )
                    cursor += 1
                if session.phase == "finished" and cursor >= len(session.events):
                    await ws.send_json({"type": "end", "nfe_count": session.nfe_count})
                    await ws.close()
                    return
                await asyncio.sleep(0.02)
        except WebSocketDisconnect:
            return

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="static")

    return app
