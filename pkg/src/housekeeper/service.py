"""HTTP facade over the runtime.

POST /sessions                   {user_name[, id]}      -> {id}
POST /sessions/{id}/messages     {text}                 -> {seq}
GET  /sessions/{id}/events?from_seq=N[&mode=poll]       -> SSE stream (or one
                                                           long-poll page)
GET  /sessions/{id}                                     -> status
GET  /state/devices                                     -> scene snapshot
POST /devices/{owner}/{fn}       {args: [...]}          -> {value} | {error}
GET  /healthz

Every error body is {"error": {"code", "message"}}.
"""

from __future__ import annotations

import json
from contextlib import asynccontextmanager
from typing import Any, List, Optional

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel, Field

from .gateway import (
    DuplicateSessionError,
    GatewayError,
    InvalidNameError,
    UnknownSessionError,
)
from .registry import (
    ApiError,
    ArityMismatchError,
    RegistryError,
    UnknownFunctionError,
    ValueKindError,
)
from .runtime import Runtime


class CreateSessionRequest(BaseModel):
    user_name: str
    id: Optional[str] = None


class CreateSessionResponse(BaseModel):
    id: str


class PostMessageRequest(BaseModel):
    text: str


class PostMessageResponse(BaseModel):
    seq: int


class SessionStatus(BaseModel):
    id: str
    user_name: str
    state: str
    queued: int
    events: int


class EventsPage(BaseModel):
    events: List[dict]
    next_seq: int
    session_state: str
    queued: int


class DeviceCallRequest(BaseModel):
    args: List[Any] = Field(default_factory=list)


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"error": {"code": code, "message": message}})


def create_app(runtime: Runtime) -> FastAPI:
    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        runtime.close()

    app = FastAPI(title="housekeeper", docs_url=None, redoc_url=None,
                  lifespan=lifespan)
    app.state.runtime = runtime
    hub = runtime.hub

    @app.exception_handler(UnknownSessionError)
    async def _unknown_session(request: Request, exc: UnknownSessionError):
        return _error(404, exc.code, str(exc))

    @app.exception_handler(DuplicateSessionError)
    async def _duplicate_session(request: Request, exc: DuplicateSessionError):
        return _error(409, exc.code, str(exc))

    @app.exception_handler(GatewayError)
    async def _gateway_error(request: Request, exc: GatewayError):
        return _error(400, getattr(exc, "code", "BadRequest"), str(exc))

    @app.exception_handler(RequestValidationError)
    async def _validation_error(request: Request, exc: RequestValidationError):
        return _error(400, "BadRequest", str(exc.errors()[:3]))

    @app.get("/healthz")
    def healthz() -> dict:
        return {"ok": True, "sessions": len(hub.sessions())}

    @app.post("/sessions", response_model=CreateSessionResponse, status_code=201)
    def create_session(body: CreateSessionRequest) -> CreateSessionResponse:
        session = hub.create_session(body.user_name, session_id=body.id)
        return CreateSessionResponse(id=session.id)

    @app.get("/sessions/{session_id}", response_model=SessionStatus)
    def session_status(session_id: str) -> SessionStatus:
        return SessionStatus(**hub.status(session_id))

    @app.post("/sessions/{session_id}/messages",
              response_model=PostMessageResponse, status_code=202)
    def post_message(session_id: str, body: PostMessageRequest) -> PostMessageResponse:
        return PostMessageResponse(seq=hub.post_message(session_id, body.text))

    @app.get("/sessions/{session_id}/events")
    def events(session_id: str, from_seq: int = 1, mode: str = "stream",
               timeout: float = 25.0):
        # from_seq is inclusive at the HTTP layer; the hub cursor is exclusive
        if mode == "poll":
            batch = hub.wait_events(session_id, from_seq - 1,
                                    timeout=min(timeout, 25.0))
            status = hub.status(session_id)
            next_seq = batch[-1].seq + 1 if batch else from_seq
            return EventsPage(
                events=[e.to_json_dict() for e in batch], next_seq=next_seq,
                session_state=status["state"], queued=status["queued"])
        hub.status(session_id)  # 404 before the stream starts

        def stream():
            after = from_seq - 1
            idle_rounds = 0
            while True:
                try:
                    batch = hub.wait_events(session_id, after, timeout=1.0)
                except UnknownSessionError:
                    return
                for event in batch:
                    after = event.seq
                    data = json.dumps(event.to_json_dict(), separators=(",", ":"))
                    yield f"id: {event.seq}\ndata: {data}\n\n"
                if not batch:
                    idle_rounds += 1
                    yield ": keep-alive\n\n"
                    if idle_rounds * 1.0 >= timeout:
                        return
                else:
                    idle_rounds = 0

        return StreamingResponse(stream(), media_type="text/event-stream",
                                 headers={"Cache-Control": "no-cache"})

    @app.get("/state/devices")
    def device_state() -> dict:
        return runtime.scene.snapshot()

    @app.post("/devices/{owner}/{fn}")
    def call_device(owner: str, fn: str, body: DeviceCallRequest):
        try:
            value = runtime.registry.call(owner, fn, list(body.args))
        except ApiError as exc:
            return {"error": {"code": exc.code, "message": str(exc),
                              "fatal": exc.fatal, "payload": exc.payload}}
        except UnknownFunctionError as exc:
            return _error(404, "UnknownFunction", str(exc))
        except (ArityMismatchError, ValueKindError) as exc:
            return _error(400, type(exc).__name__.removesuffix("Error"), str(exc))
        except RegistryError as exc:
            return _error(400, "RegistryError", str(exc))
        return {"value": value}

    return app
