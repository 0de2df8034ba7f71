"""Session-oriented front door.

Each session owns an append-only event log (the transcript the UI replays)
and a worker thread that handles queued user messages one at a time, so a
session never runs two workflows concurrently while different sessions stay
fully parallel.

Events deliberately carry no timestamps or random ids: a replayed scenario
must serialize to byte-identical transcripts.
"""

from __future__ import annotations

import logging
import queue
import threading
import time
import uuid
from dataclasses import dataclass
from typing import Callable, Optional

log = logging.getLogger(__name__)

STATE_IDLE = "Idle"
STATE_PROCESSING = "Processing"

EVENT_KINDS = (
    "message",     # user-visible chat line (role user|housekeeper)
    "trace",       # internal assistant<->housekeeper protocol line
    "cache_hit",
    "generating",
    "retry",
    "executing",
    "fsm",         # program definition for dashboards
    "snapshot",    # device/scene snapshot during execution
    "reporting",
    "report",      # final user-facing report (also a chat line)
    "error",
)


class GatewayError(Exception):
    code = "GatewayError"


class UnknownSessionError(GatewayError):
    code = "UnknownSession"


class InvalidNameError(GatewayError):
    code = "InvalidName"


class DuplicateSessionError(GatewayError):
    code = "DuplicateSession"


@dataclass(frozen=True)
class EventRecord:
    seq: int
    kind: str
    role: Optional[str] = None
    text: Optional[str] = None
    payload: Optional[dict] = None

    def to_json_dict(self) -> dict:
        doc = {"seq": self.seq, "kind": self.kind}
        if self.role is not None:
            doc["role"] = self.role
        if self.text is not None:
            doc["text"] = self.text
        if self.payload is not None:
            doc["payload"] = self.payload
        return doc


@dataclass
class Session:
    id: str
    user_name: str
    created_at: float
    state: str = STATE_IDLE


class _SessionRuntime:
    def __init__(self, session: Session):
        self.session = session
        self.events: list = []
        self.queue: "queue.Queue" = queue.Queue()
        self.pending = 0
        self.cond = threading.Condition()
        self.worker: Optional[threading.Thread] = None


class SessionHub:
    """Registry of sessions, their event logs and their worker threads.

    The message handler (the coordinator's entry point) is injected after
    construction to keep the object graph acyclic.
    """

    _SENTINEL = object()

    def __init__(self):
        self._sessions: dict = {}
        self._lock = threading.RLock()
        self._handler: Optional[Callable] = None
        self._closed = False

    def set_handler(self, handler: Callable) -> None:
        """handler(session, text, seq) runs on the session's worker thread."""
        self._handler = handler

    # -- sessions -------------------------------------------------------------

    def create_session(self, user_name: str, session_id: Optional[str] = None) -> Session:
        if not isinstance(user_name, str) or not user_name.strip():
            raise InvalidNameError("user_name must be non-empty")
        with self._lock:
            if self._closed:
                raise GatewayError("hub is closed")
            sid = session_id or uuid.uuid4().hex
            if sid in self._sessions:
                raise DuplicateSessionError(f"session {sid!r} already exists")
            session = Session(id=sid, user_name=user_name.strip(),
                              created_at=time.time())
            runtime = _SessionRuntime(session)
            runtime.worker = threading.Thread(
                target=self._work, args=(runtime,), daemon=True,
                name=f"session-{sid[:8]}")
            self._sessions[sid] = runtime
            runtime.worker.start()
            return session

    def get_session(self, session_id: str) -> Session:
        return self._runtime(session_id).session

    def sessions(self) -> list:
        with self._lock:
            return [rt.session for rt in self._sessions.values()]

    def _runtime(self, session_id: str) -> _SessionRuntime:
        with self._lock:
            runtime = self._sessions.get(session_id)
        if runtime is None:
            raise UnknownSessionError(f"no session {session_id!r}")
        return runtime

    # -- messages and events ----------------------------------------------------

    def post_message(self, session_id: str, text: str) -> int:
        """Append the user message event and queue it for the worker.
        Returns the assigned seq.  Messages posted while Processing are
        queued FIFO, never rejected."""
        if not isinstance(text, str) or not text.strip():
            raise GatewayError("message text must be non-empty")
        runtime = self._runtime(session_id)
        with runtime.cond:
            event = self._emit_locked(runtime, "message", role="user", text=text)
            runtime.pending += 1
        runtime.queue.put((text, event.seq))
        return event.seq

    def emit(self, session_id: str, kind: str, role: Optional[str] = None,
             text: Optional[str] = None, payload: Optional[dict] = None) -> EventRecord:
        if kind not in EVENT_KINDS:
            raise GatewayError(f"unknown event kind {kind!r}")
        runtime = self._runtime(session_id)
        with runtime.cond:
            return self._emit_locked(runtime, kind, role=role, text=text, payload=payload)

    def _emit_locked(self, runtime: _SessionRuntime, kind: str, role=None,
                     text=None, payload=None) -> EventRecord:
        event = EventRecord(seq=len(runtime.events) + 1, kind=kind, role=role,
                            text=text, payload=payload)
        runtime.events.append(event)
        runtime.cond.notify_all()
        return event

    def events_since(self, session_id: str, after_seq: int = 0) -> list:
        """Events with seq strictly greater than after_seq (exclusive cursor)."""
        runtime = self._runtime(session_id)
        with runtime.cond:
            return [e for e in runtime.events if e.seq > after_seq]

    def wait_events(self, session_id: str, after_seq: int = 0,
                    timeout: float = 25.0) -> list:
        """Long-poll: block until events past after_seq exist (or timeout)."""
        runtime = self._runtime(session_id)
        deadline = time.monotonic() + timeout
        with runtime.cond:
            while True:
                fresh = [e for e in runtime.events if e.seq > after_seq]
                if fresh:
                    return fresh
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return []
                runtime.cond.wait(remaining)

    def status(self, session_id: str) -> dict:
        runtime = self._runtime(session_id)
        with runtime.cond:
            return {
                "id": runtime.session.id,
                "user_name": runtime.session.user_name,
                "state": runtime.session.state,
                "queued": runtime.pending,
                "events": len(runtime.events),
            }

    def wait_idle(self, session_id: str, timeout: float = 30.0) -> bool:
        """Block until the session has drained its queue.  Test/CLI helper."""
        runtime = self._runtime(session_id)
        deadline = time.monotonic() + timeout
        with runtime.cond:
            while runtime.pending > 0:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return False
                runtime.cond.wait(remaining)
            return True

    # -- worker -------------------------------------------------------------------

    def _work(self, runtime: _SessionRuntime) -> None:
        while True:
            item = runtime.queue.get()
            if item is self._SENTINEL:
                return
            text, seq = item
            with runtime.cond:
                runtime.session.state = STATE_PROCESSING
            try:
                if self._handler is None:
                    raise GatewayError("no message handler installed")
                self._handler(runtime.session, text, seq)
            except Exception:
                log.exception("handler crashed for session %s", runtime.session.id)
                with runtime.cond:
                    self._emit_locked(
                        runtime, "error", role="housekeeper",
                        text="I'm sorry, something went wrong while handling that.",
                        payload={"code": "InternalError"})
            finally:
                with runtime.cond:
                    runtime.session.state = STATE_IDLE
                    runtime.pending -= 1
                    runtime.cond.notify_all()

    def close(self) -> None:
        with self._lock:
            self._closed = True
            runtimes = list(self._sessions.values())
        for runtime in runtimes:
            runtime.queue.put(self._SENTINEL)
        for runtime in runtimes:
            if runtime.worker is not None:
                runtime.worker.join(timeout=5.0)
