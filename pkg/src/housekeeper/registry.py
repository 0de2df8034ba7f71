"""API registry: the browsable catalog of functions a control program may call.

Devices, AI modules and the executor's own utility helpers all register here
under an owner id.  Descriptors carry parameter/return kinds and an expected
latency, so the catalog doubles as the prompt-facing API documentation and as
the source of simulated wall time.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .exprs import kind_of

log = logging.getLogger(__name__)

PARAM_KINDS = ("number", "boolean", "string", "list", "record", "null", "any")


class RegistryError(Exception):
    pass


class UnknownFunctionError(RegistryError):
    pass


class ArityMismatchError(RegistryError):
    pass


class ValueKindError(RegistryError):
    pass


class ApiError(Exception):
    """Raised by handlers to signal a call failure.

    fatal=True means the whole run must stop (Terminated); otherwise the
    executor logs the error and moves on per its error policy.
    """

    def __init__(self, code: str, message: str, fatal: bool = False, payload: Optional[dict] = None):
        super().__init__(message)
        self.code = code
        self.message = message
        self.fatal = fatal
        self.payload = payload or {}


@dataclass(frozen=True)
class ApiParam:
    name: str
    kind: str


@dataclass(frozen=True)
class ApiDescriptor:
    owner: str
    name: str
    params: tuple
    returns: str
    description: str
    expected_latency: float = 0.0
    on_error: str = "retry"  # "retry" | "terminate"

    def signature(self) -> str:
        args = ", ".join(f"{p.name}: {p.kind}" for p in self.params)
        return f"{self.owner}.{self.name}({args}) -> {self.returns}"

    def to_json_dict(self) -> dict:
        return {
            "owner": self.owner,
            "name": self.name,
            "params": [{"name": p.name, "kind": p.kind} for p in self.params],
            "returns": self.returns,
            "description": self.description,
            "expected_latency": self.expected_latency,
            "on_error": self.on_error,
        }


def param(name: str, kind: str) -> ApiParam:
    if kind not in PARAM_KINDS:
        raise ValueError(f"unknown param kind {kind!r}")
    return ApiParam(name, kind)


@dataclass
class _Entry:
    descriptor: ApiDescriptor
    handler: Callable


class ApiRegistry:
    """Thread-safe function catalog with kind-checked dispatch."""

    def __init__(self, simulate_latency: bool = False):
        self._entries: dict = {}
        self._liveness: dict = {}
        self._lock = threading.RLock()
        self.simulate_latency = simulate_latency

    def register(self, descriptor: ApiDescriptor, handler: Callable,
                 alive: Optional[Callable] = None) -> None:
        key = (descriptor.owner, descriptor.name)
        with self._lock:
            if key in self._entries:
                raise RegistryError(f"{descriptor.owner}.{descriptor.name} already registered")
            self._entries[key] = _Entry(descriptor, handler)
            if alive is not None:
                self._liveness[descriptor.owner] = alive
            else:
                self._liveness.setdefault(descriptor.owner, lambda: True)

    def unregister_owner(self, owner: str) -> None:
        with self._lock:
            for key in [k for k in self._entries if k[0] == owner]:
                del self._entries[key]
            self._liveness.pop(owner, None)

    def owners(self) -> list:
        with self._lock:
            return sorted({owner for owner, _ in self._entries})

    def descriptors(self) -> list:
        with self._lock:
            return sorted((e.descriptor for e in self._entries.values()),
                          key=lambda d: (d.owner, d.name))

    def resolve(self, owner: str, fn: str) -> ApiDescriptor:
        with self._lock:
            entry = self._entries.get((owner, fn))
        if entry is None:
            raise UnknownFunctionError(f"no function {owner}.{fn}")
        return entry.descriptor

    def ping(self, owners) -> dict:
        """Liveness per owner id; unknown owners are absent from the result."""
        with self._lock:
            probes = {owner: self._liveness[owner] for owner in owners
                      if owner in self._liveness}
        return {owner: bool(probe()) for owner, probe in probes.items()}

    def call(self, owner: str, fn: str, args: list, log_sink: Optional[list] = None) -> Any:
        """Dispatch a kind-checked call.

        Appends exactly one log entry per call to log_sink (success or error).
        Re-raises ApiError after logging so the caller decides the policy.
        """
        with self._lock:
            entry = self._entries.get((owner, fn))
        if entry is None:
            raise UnknownFunctionError(f"no function {owner}.{fn}")
        desc = entry.descriptor
        if len(args) != len(desc.params):
            raise ArityMismatchError(
                f"{owner}.{fn} takes {len(desc.params)} arguments, got {len(args)}")
        for value, p in zip(args, desc.params):
            actual = kind_of(value)
            if p.kind != "any" and actual != p.kind:
                raise ValueKindError(
                    f"{owner}.{fn} argument {p.name!r} wants {p.kind}, got {actual}")
        if self.simulate_latency and desc.expected_latency > 0:
            time.sleep(desc.expected_latency)
        try:
            result = entry.handler(*args)
        except ApiError as exc:
            if log_sink is not None:
                log_sink.append(_log_entry(
                    "error", owner, f"{owner}.{fn} failed: {exc.message}",
                    {"fn": fn, "code": exc.code, "fatal": exc.fatal,
                     "latency": desc.expected_latency, **exc.payload}))
            raise
        actual = kind_of(result)
        if desc.returns != "any" and actual != desc.returns:
            raise ValueKindError(
                f"{owner}.{fn} returned {actual}, descriptor promises {desc.returns}")
        if log_sink is not None:
            log_sink.append(_log_entry(
                "info", owner, f"{owner}.{fn} ok",
                {"fn": fn, "latency": desc.expected_latency, "result": result}))
        return result


def _log_entry(level: str, source: str, message: str, payload: Optional[dict] = None) -> dict:
    entry = {"level": level, "source": source, "message": message}
    if payload:
        entry["payload"] = payload
    return entry
