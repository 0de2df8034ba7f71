"""Central workflow engine.

Drives one user message through the whole protocol: chat reply, assistance
probe, instruction summary, long-term-memory lookup, program generation with
bounded retries, execution, and the final report.  Emits gateway events at
every step so clients can replay exactly what happened.
"""

from __future__ import annotations

import json
import logging
import re
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import program as program_mod
from .executor import Executor, ExecutionReport
from .gateway import Session, SessionHub
from .memory import (
    ChatMessage,
    ROLE_ASSISTANT,
    ROLE_HOUSEKEEPER,
    ROLE_USER,
    ScriptCache,
    ShortTermMemory,
)
from .pipeline import Pipeline, PipelineError, validate_program
from .provider import (
    KEYWORD_RULE_PROMPT,
    PURPOSE_ASSIST_PROBE,
    PURPOSE_CHAT,
    PURPOSE_REPORT,
    PURPOSE_SUMMARIZE,
    CompletionRequest,
    Message,
    ProviderError,
    ROLE_SYSTEM,
    render_prompt_stack,
)
from .registry import ApiRegistry

log = logging.getLogger(__name__)

# Verbatim protocol lines (Assistant -> Housekeeper).
PROBE_TEXT = "Do you require any assistance?"
SUMMARY_REQUEST_TEXT = "Please repeat the employer's instruction using as few words as possible."

PHASES = ("Filter", "Probe", "Summarize", "Lookup", "Generate", "Validate",
          "Execute", "Report", "Done", "Failed")

DEFAULT_MAX_RETRIES = 3

_YES_RE = re.compile(r"\byes\b")
_NO_RE = re.compile(r"\bno\b")
_TASK_CUE_RE = re.compile(r"\?|^(can|could|please|would|will)\b", re.IGNORECASE)


def classify_keyword(reply: str) -> Optional[bool]:
    """Keyword rule: case-insensitive whole-word yes/no; when both occur the
    earlier one wins; neither -> None (caller re-asks)."""
    lowered = reply.lower()
    yes = _YES_RE.search(lowered)
    no = _NO_RE.search(lowered)
    if yes and no:
        return yes.start() < no.start()
    if yes:
        return True
    if no:
        return False
    return None


@dataclass(frozen=True)
class AssistanceVerdict:
    needs_help: bool
    raw_reply: str


@dataclass
class TaskWorkflow:
    session_id: str
    instruction: str
    phase: str = "Filter"
    phase_trail: list = field(default_factory=lambda: ["Filter"])
    summary: Optional[str] = None
    attempts: int = 0
    program: Optional[program_mod.FsmProgram] = None
    report: Optional[ExecutionReport] = None
    from_cache: bool = False
    failure: Optional[str] = None

    def advance(self, phase: str) -> None:
        if phase not in PHASES:
            raise ValueError(f"unknown phase {phase!r}")
        self.phase = phase
        self.phase_trail.append(phase)


class Coordinator:
    def __init__(self, hub: SessionHub, provider, pipeline: Pipeline,
                 cache: ScriptCache, executor: Executor, registry: ApiRegistry,
                 environment: Optional[dict] = None,
                 snapshot_source: Optional[Callable] = None,
                 max_retries: int = DEFAULT_MAX_RETRIES,
                 probe_reasks: int = 1, summary_reasks: int = 1,
                 probe_always: bool = True):
        self.hub = hub
        self.provider = provider
        self.pipeline = pipeline
        self.cache = cache
        self.executor = executor
        self.registry = registry
        self.environment = environment or {"devices": [], "modules": []}
        self.snapshot_source = snapshot_source
        self.max_retries = max_retries
        self.probe_reasks = probe_reasks
        self.summary_reasks = summary_reasks
        self.probe_always = probe_always
        self._memories: dict = {}
        self.last_workflow: Optional[TaskWorkflow] = None

    # -- memory ------------------------------------------------------------------

    def memory_for(self, session_id: str) -> ShortTermMemory:
        stm = self._memories.get(session_id)
        if stm is None:
            stm = ShortTermMemory(self.registry, environment=self.environment)
            self._memories[session_id] = stm
        return stm

    # -- entry point -------------------------------------------------------------

    def handle_user_message(self, session: Session, text: str, seq: int) -> None:
        stm = self.memory_for(session.id)
        stm.append_message(ChatMessage(
            session_id=session.id, role=ROLE_USER, text=text, seq=seq,
            timestamp=time.time()))

        try:
            reply = self.provider.complete(CompletionRequest(
                purpose=PURPOSE_CHAT,
                messages=tuple(render_prompt_stack(session.user_name, stm.history()))))
        except ProviderError as exc:
            log.warning("chat completion failed: %s", exc)
            self._say(session, stm, "I'm sorry, I ran into a problem handling that. "
                                    "Could you try rephrasing?")
            return
        self._say(session, stm, reply)

        if not self.probe_always and not _TASK_CUE_RE.search(text):
            return
        verdict = self.probe_assistance(session)
        if not verdict.needs_help:
            return

        workflow = TaskWorkflow(session_id=session.id, instruction=text)
        self.last_workflow = workflow
        workflow.advance("Probe")
        try:
            workflow.advance("Summarize")
            workflow.summary = self.request_summary(session, instruction=text)
            self.dispatch_task(session, workflow)
        except ProviderError as exc:
            # Liveness: every path ends in a report, even a broken provider.
            log.warning("workflow aborted by provider error: %s", exc)
            workflow.failure = f"Provider: {exc}"
            workflow.report = None
            self.compose_report(session, workflow)

    def _say(self, session: Session, stm: ShortTermMemory, text: str) -> None:
        event = self.hub.emit(session.id, "message", role=ROLE_HOUSEKEEPER, text=text)
        stm.append_message(ChatMessage(
            session_id=session.id, role=ROLE_HOUSEKEEPER, text=text,
            seq=event.seq, timestamp=time.time()))

    def _trace(self, session: Session, stm: ShortTermMemory, role: str,
               text: str) -> None:
        event = self.hub.emit(session.id, "trace", role=role, text=text)
        stm.append_message(ChatMessage(
            session_id=session.id, role=role, text=text, seq=event.seq,
            timestamp=time.time(), internal=True))

    # -- protocol steps ------------------------------------------------------------

    def probe_assistance(self, session: Session) -> AssistanceVerdict:
        """Table-2 steps 3-4: ask whether the housekeeper needs the
        assistants; classify the reply by the keyword rule."""
        stm = self.memory_for(session.id)
        reply = ""
        for _ in range(1 + self.probe_reasks):
            self._trace(session, stm, ROLE_ASSISTANT, PROBE_TEXT)
            stack = render_prompt_stack(session.user_name, stm.history())
            # keyword contract rides along as context, never shown in the dialog
            messages = stack[:8] + [Message(ROLE_SYSTEM, KEYWORD_RULE_PROMPT)] + stack[8:]
            reply = self.provider.complete(CompletionRequest(
                purpose=PURPOSE_ASSIST_PROBE, messages=tuple(messages)))
            self._trace(session, stm, ROLE_HOUSEKEEPER, reply)
            verdict = classify_keyword(reply)
            if verdict is not None:
                return AssistanceVerdict(needs_help=verdict, raw_reply=reply)
            log.info("probe reply carries neither keyword; re-asking")
        return AssistanceVerdict(needs_help=False, raw_reply=reply)

    def request_summary(self, session: Session, instruction: str) -> str:
        """Table-2 steps 5-6: condense the instruction for the cache key."""
        stm = self.memory_for(session.id)
        for _ in range(1 + self.summary_reasks):
            self._trace(session, stm, ROLE_ASSISTANT, SUMMARY_REQUEST_TEXT)
            summary = self.provider.complete(CompletionRequest(
                purpose=PURPOSE_SUMMARIZE,
                messages=tuple(render_prompt_stack(session.user_name, stm.history()))))
            self._trace(session, stm, ROLE_HOUSEKEEPER, summary)
            if summary.strip():
                return summary.strip()
            log.info("empty summary; re-asking")
        return instruction

    # -- task path ----------------------------------------------------------------

    def dispatch_task(self, session: Session, workflow: TaskWorkflow) -> None:
        stm = self.memory_for(session.id)
        workflow.advance("Lookup")
        hit = self.cache.lookup(workflow.summary)
        if hit is not None:
            entry, score = hit
            try:
                cached = program_mod.from_json_dict(entry.program)
            except program_mod.ProgramDecodeError as exc:
                log.warning("cached program for %r is corrupt (%s); regenerating",
                            workflow.summary, exc)
                cached = None
            if cached is not None:
                check = validate_program(cached, self.registry)
                if check.ok:
                    self.hub.emit(session.id, "cache_hit", payload={
                        "summary": entry.summary, "score": round(score, 6)})
                    workflow.program = cached
                    workflow.from_cache = True
                else:
                    log.warning("cached program for %r no longer validates (%s); "
                                "regenerating", workflow.summary, check.summary())

        if workflow.program is None:
            self.generate_with_retry(session, workflow)
            if workflow.program is None:
                workflow.report = None
                self.compose_report(session, workflow)
                return

        workflow.advance("Execute")
        self.hub.emit(session.id, "executing", payload={
            "summary": workflow.summary,
            "source": "cache" if workflow.from_cache else "generated"})
        self.hub.emit(session.id, "fsm", payload={
            "program": workflow.program.to_json_dict()})

        def on_state(state_name: str, env: dict) -> None:
            payload = {"state": state_name}
            if self.snapshot_source is not None:
                payload["devices"] = self.snapshot_source()
            self.hub.emit(session.id, "snapshot", payload=payload)

        report = self.executor.run(workflow.program, on_state=on_state)
        workflow.report = report
        stm.append_execution(self._execution_record(workflow, report))
        if report.success and not workflow.from_cache:
            self.cache.store(workflow.summary, workflow.program.to_json_dict(),
                             report.status)
        self.compose_report(session, workflow)

    def generate_with_retry(self, session: Session, workflow: TaskWorkflow) -> None:
        """Initial attempt plus up to max_retries; each failure feeds its
        error text into the next attempt's directive."""
        stm = self.memory_for(session.id)
        last_error: Optional[str] = None
        for retry in range(self.max_retries + 1):
            workflow.advance("Generate")
            self.hub.emit(session.id, "generating", payload={"attempt": retry + 1})
            try:
                candidate = self.pipeline.generate(
                    workflow.summary, stm.snapshot(), retry=retry,
                    last_error=last_error)
                workflow.advance("Validate")
                check = validate_program(candidate, self.registry)
                if not check.ok:
                    raise PipelineError("ValidationFailed", check.summary())
                workflow.attempts = retry
                workflow.program = candidate
                return
            except PipelineError as exc:
                last_error = _short_error(f"{exc.code}: {exc}")
            except ProviderError as exc:
                if not exc.retryable:
                    workflow.attempts = retry
                    workflow.failure = _short_error(f"Provider: {exc}")
                    stm.append_execution({
                        "kind": "generation_error", "summary": workflow.summary,
                        "attempt": retry + 1, "error": workflow.failure})
                    return
                last_error = _short_error(f"Provider: {exc}")
            stm.append_execution({
                "kind": "generation_error", "summary": workflow.summary,
                "attempt": retry + 1, "error": last_error})
            if retry < self.max_retries:
                self.hub.emit(session.id, "retry",
                              payload={"retry": retry + 1, "error": last_error})
        workflow.attempts = self.max_retries
        workflow.failure = last_error

    # -- reporting -----------------------------------------------------------------

    def compose_report(self, session: Session, workflow: TaskWorkflow) -> None:
        stm = self.memory_for(session.id)
        workflow.advance("Report")
        report = workflow.report
        directive = None if report is None else self._report_directive(workflow, report)
        self.hub.emit(session.id, "reporting", payload={"directive": directive})
        if report is None:
            # Generation never produced a runnable program; apologize without
            # bothering the provider.
            text = (f"I'm sorry, I wasn't able to complete that task. "
                    f"My plan kept failing ({workflow.failure}). "
                    f"I will look into it and try to do better.")
        else:
            try:
                text = self.provider.complete(CompletionRequest(
                    purpose=PURPOSE_REPORT,
                    messages=tuple(render_prompt_stack(session.user_name, stm.history())
                                   + [Message(ROLE_USER, directive)])))
            except ProviderError as exc:
                log.warning("report completion failed (%s); using plain summary", exc)
                text = self._fallback_report(report)

        payload = {
            "status": report.status if report is not None else "failed",
            "attempts": workflow.attempts,
            "from_cache": workflow.from_cache,
            "summary": workflow.summary,
            "execution": report.to_json_dict() if report is not None else None,
            "failure": workflow.failure,
        }
        event = self.hub.emit(session.id, "report", role=ROLE_HOUSEKEEPER,
                              text=text, payload=payload)
        stm.append_message(ChatMessage(
            session_id=session.id, role=ROLE_HOUSEKEEPER, text=text,
            seq=event.seq, timestamp=time.time()))
        workflow.advance("Done" if report is not None and report.success else "Failed")

    def _report_directive(self, workflow: TaskWorkflow, report: ExecutionReport) -> str:
        if report.status == "success":
            status_text = "success"
        elif report.status == "terminated":
            status_text = f"terminated ({report.reason})"
        else:
            status_text = f"failed ({report.error['code']}: {report.error['message']})"
        outputs_json = json.dumps(report.outputs, sort_keys=True)
        problems = [f"{entry['level']}: {entry['message']}" for entry in report.logs
                    if entry["level"] in ("warning", "error")]
        logs_text = "; ".join(problems) if problems else "clean"
        return (f"Report the result to your employer. "
                f"Instruction: {workflow.instruction} | Status: {status_text} | "
                f"Outputs: {outputs_json} | Logs: {logs_text}")

    def _fallback_report(self, report: ExecutionReport) -> str:
        if report.success:
            return "The task completed successfully."
        if report.status == "terminated":
            return f"I had to stop the task: {report.reason}"
        return (f"The task failed: {report.error['code']}: "
                f"{report.error['message']}")

    def _execution_record(self, workflow: TaskWorkflow,
                          report: ExecutionReport) -> dict:
        record = {
            "kind": "execution",
            "summary": workflow.summary,
            "status": report.status,
            "visited_states": list(report.visited_states),
            "outputs": report.outputs,
            "steps_used": report.steps_used,
            "wall_time": round(report.wall_time, 6),
        }
        if report.reason is not None:
            record["reason"] = report.reason
        if report.error is not None:
            record["error"] = report.error
        return record


def _short_error(text: str, limit: int = 160) -> str:
    text = " ".join(text.split())
    return text if len(text) <= limit else text[:limit - 1] + "…"
