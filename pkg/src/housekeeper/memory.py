"""Short-term and long-term memory.

Short-term memory is per-session working context: environment inventory, API
docs, the dialog so far and recent execution results.  Long-term memory is
the script cache: summaries embedded as vectors, looked up by cosine
similarity, persisted as JSONL so it survives restarts.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import embedding

log = logging.getLogger(__name__)

ROLE_USER = "user"
ROLE_HOUSEKEEPER = "housekeeper"
ROLE_ASSISTANT = "assistant"
ROLES = (ROLE_USER, ROLE_HOUSEKEEPER, ROLE_ASSISTANT)

DEFAULT_TAU = 0.80


@dataclass(frozen=True)
class ChatMessage:
    session_id: str
    role: str
    text: str
    seq: int
    timestamp: float
    internal: bool = False

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown chat role {self.role!r}")


@dataclass(frozen=True)
class ContextSnapshot:
    environment: dict
    api_docs: tuple
    chat_history: tuple
    exec_results: tuple


class ShortTermMemory:
    """Working context for one session.  Thread-safe; snapshots are frozen
    copies so pipeline calls never see mid-append state."""

    def __init__(self, registry, environment: Optional[dict] = None):
        self._registry = registry
        self._environment = environment or {"devices": [], "modules": []}
        self._history: list = []
        self._exec_results: list = []
        self._lock = threading.Lock()

    def set_environment(self, environment: dict) -> None:
        with self._lock:
            self._environment = environment

    def append_message(self, message: ChatMessage) -> None:
        with self._lock:
            if self._history and message.seq <= self._history[-1].seq:
                raise ValueError(
                    f"message seq {message.seq} not after {self._history[-1].seq}")
            self._history.append(message)

    def append_execution(self, record: dict) -> None:
        with self._lock:
            self._exec_results.append(dict(record))

    def history(self, include_internal: bool = True) -> list:
        with self._lock:
            if include_internal:
                return list(self._history)
            return [m for m in self._history if not m.internal]

    def snapshot(self) -> ContextSnapshot:
        with self._lock:
            return ContextSnapshot(
                environment=json.loads(json.dumps(self._environment)),
                api_docs=tuple(self._registry.descriptors()),
                chat_history=tuple(self._history),
                exec_results=tuple(json.loads(json.dumps(r)) for r in self._exec_results),
            )


@dataclass
class CacheEntry:
    summary: str
    vector: np.ndarray
    program: dict
    created_at: float
    use_count: int = 0
    last_used: float = 0.0
    touch_order: int = 0


class CacheError(Exception):
    pass


class ScriptCache:
    """Long-term memory: validated programs keyed by summary embeddings.

    One entry per exact summary (a re-store replaces).  Persistence is
    append-only JSONL; the newest record for a summary wins on load, and the
    file is compacted whenever a load finds stale records.
    """

    def __init__(self, path: Optional[str] = None, tau: float = DEFAULT_TAU):
        if not 0.0 < tau <= 1.0:
            raise ValueError(f"tau must be in (0, 1], got {tau}")
        self.path = path
        self.tau = tau
        self._entries: dict = {}
        self._touch = 0
        self._lock = threading.Lock()
        if path is not None and os.path.exists(path):
            self._load()

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def entries(self) -> list:
        with self._lock:
            return list(self._entries.values())

    def store(self, summary: str, program: dict, report_status: str) -> CacheEntry:
        """Insert or replace.  Only successful executions may be cached."""
        if report_status != "success":
            raise CacheError(f"refusing to cache a {report_status!r} execution")
        if not summary.strip():
            raise CacheError("refusing to cache an empty summary")
        now = time.time()
        with self._lock:
            self._touch += 1
            entry = CacheEntry(
                summary=summary,
                vector=embedding.embed(summary),
                program=json.loads(json.dumps(program)),
                created_at=now,
                use_count=0,
                last_used=now,
                touch_order=self._touch,
            )
            self._entries[summary] = entry
            self._append_record(entry)
            return entry

    def lookup(self, summary: str) -> Optional[tuple]:
        """Best entry with cosine similarity >= tau, as (entry, score).

        Ties prefer the most recently used entry.  A hit bumps the entry's
        usage stats and persists them.
        """
        query = embedding.embed(summary)
        with self._lock:
            best = None
            best_key = None
            for entry in self._entries.values():
                score = embedding.similarity(query, entry.vector)
                key = (score, entry.last_used, entry.touch_order)
                if best_key is None or key > best_key:
                    best, best_key = entry, key
            if best is None or best_key[0] < self.tau:
                return None
            self._touch += 1
            best.use_count += 1
            best.last_used = time.time()
            best.touch_order = self._touch
            self._append_record(best)
            return best, best_key[0]

    def _append_record(self, entry: CacheEntry) -> None:
        if self.path is None:
            return
        record = {
            "summary": entry.summary,
            "embedding": embedding.encode_vector(entry.vector),
            "program": entry.program,
            "stats": {
                "created_at": entry.created_at,
                "use_count": entry.use_count,
                "last_used": entry.last_used,
            },
        }
        directory = os.path.dirname(os.path.abspath(self.path))
        os.makedirs(directory, exist_ok=True)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, separators=(",", ":")) + "\n")

    def _load(self) -> None:
        records = 0
        with open(self.path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    doc = json.loads(line)
                    entry = CacheEntry(
                        summary=doc["summary"],
                        vector=embedding.decode_vector(doc["embedding"]),
                        program=doc["program"],
                        created_at=float(doc["stats"]["created_at"]),
                        use_count=int(doc["stats"]["use_count"]),
                        last_used=float(doc["stats"]["last_used"]),
                    )
                except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                    raise CacheError(f"{self.path}:{line_no}: bad cache record: {exc}") from exc
                records += 1
                self._touch += 1
                entry.touch_order = self._touch
                self._entries[entry.summary] = entry
        if records > len(self._entries):
            log.info("compacting cache %s: %d records for %d entries",
                     self.path, records, len(self._entries))
            self._compact()

    def _compact(self) -> None:
        tmp_path = self.path + ".tmp"
        with open(tmp_path, "w", encoding="utf-8") as fh:
            ordered = sorted(self._entries.values(), key=lambda e: e.touch_order)
            for entry in ordered:
                record = {
                    "summary": entry.summary,
                    "embedding": embedding.encode_vector(entry.vector),
                    "program": entry.program,
                    "stats": {
                        "created_at": entry.created_at,
                        "use_count": entry.use_count,
                        "last_used": entry.last_used,
                    },
                }
                fh.write(json.dumps(record, separators=(",", ":")) + "\n")
        os.replace(tmp_path, self.path)
