"""Language -> FSM -> program transformation pipeline.

Three phases, mirroring how the orchestrator turns an instruction into an
executable control program:

1. enrich: rewrite the instruction with environment knowledge (which devices
   exist, where things are).
2. derive_fsm: have the provider break the task into a state-machine sketch
   (stages with goals, plus transition conditions in plain language).
3. code generation, in three sub-phases: per-stage operation lists, guard
   expressions for every transition, and a deterministic final assembly.

Provider output is demanded as JSON and parsed strictly; anything malformed
raises a PipelineError, which the coordinator's retry loop feeds back into
the next attempt as error context.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from typing import Optional

from . import exprs
from .memory import ContextSnapshot
from .program import ApiCall, FsmProgram, ProgramState, Transition
from .provider import (
    PURPOSE_CHAT,
    PURPOSE_FSM_DERIVE,
    PURPOSE_STAGE_OPS,
    PURPOSE_TRANSITIONS,
    CompletionRequest,
    Message,
    ROLE_SYSTEM,
    ROLE_USER,
)
from .registry import ApiRegistry, UnknownFunctionError

log = logging.getLogger(__name__)

_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


class PipelineError(Exception):
    """Raised for any recoverable defect in provider output; the code names
    the defect class and feeds the retry directive."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class EnrichedTask:
    original: str
    enriched: str
    referenced_devices: tuple
    referenced_modules: tuple


@dataclass(frozen=True)
class SketchState:
    name: str
    goal: str


@dataclass(frozen=True)
class FsmSketch:
    initial: str
    terminals: tuple
    states: tuple
    transitions: tuple  # of {"from", "to", "condition"} dicts

    def state_names(self) -> list:
        return [s.name for s in self.states]

    def validate_structure(self) -> None:
        names = self.state_names()
        if not names:
            raise PipelineError("StructureError", "sketch has no states")
        dupes = {n for n in names if names.count(n) > 1}
        if dupes:
            raise PipelineError("StructureError", f"duplicate state names {sorted(dupes)}")
        for name in names:
            if not _NAME_RE.match(name):
                raise PipelineError("StructureError", f"bad state name {name!r}")
        if self.initial not in names:
            raise PipelineError("StructureError", f"initial state {self.initial!r} not defined")
        if not self.terminals:
            raise PipelineError("StructureError", "sketch declares no terminal states")
        for terminal in self.terminals:
            if terminal not in names:
                raise PipelineError("StructureError", f"terminal {terminal!r} not defined")
        outgoing = {name: 0 for name in names}
        for t in self.transitions:
            for endpoint in (t["from"], t["to"]):
                if endpoint not in names:
                    raise PipelineError(
                        "StructureError", f"transition endpoint {endpoint!r} not defined")
            outgoing[t["from"]] += 1
        for name in names:
            if name not in self.terminals and outgoing[name] == 0:
                raise PipelineError(
                    "StructureError", f"non-terminal state {name!r} has no outgoing transition")


@dataclass
class ValidationIssue:
    severity: str  # "error" | "warning"
    code: str
    message: str
    where: str = ""

    def to_json_dict(self) -> dict:
        return {"severity": self.severity, "code": self.code,
                "message": self.message, "where": self.where}


@dataclass
class ValidationReport:
    issues: list = field(default_factory=list)

    def add(self, severity: str, code: str, message: str, where: str = "") -> None:
        self.issues.append(ValidationIssue(severity, code, message, where))

    def errors(self) -> list:
        return [i for i in self.issues if i.severity == "error"]

    def warnings(self) -> list:
        return [i for i in self.issues if i.severity == "warning"]

    @property
    def ok(self) -> bool:
        return not self.errors()

    def summary(self) -> str:
        if self.ok:
            return "valid"
        first = self.errors()[0]
        more = len(self.errors()) - 1
        tail = f" (+{more} more)" if more else ""
        return f"{first.code}: {first.message}{tail}"


def _extract_json(text: str):
    """Parse the provider's reply as JSON, tolerating prose around one
    top-level JSON value."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    for opener, closer in (("{", "}"), ("[", "]")):
        start = text.find(opener)
        end = text.rfind(closer)
        if start != -1 and end > start:
            try:
                return json.loads(text[start:end + 1])
            except json.JSONDecodeError:
                continue
    raise PipelineError("ParseError", "provider returned no parseable JSON value")


def parse_sketch(text: str) -> FsmSketch:
    doc = _extract_json(text)
    if not isinstance(doc, dict):
        raise PipelineError("ParseError", "sketch must be a JSON object")
    states_doc = doc.get("states")
    if not isinstance(states_doc, list):
        raise PipelineError("ParseError", "sketch needs a states list")
    states = []
    for s in states_doc:
        if not isinstance(s, dict) or not isinstance(s.get("name"), str):
            raise PipelineError("ParseError", f"bad sketch state {s!r}")
        states.append(SketchState(name=s["name"], goal=str(s.get("goal", ""))))
    initial = doc.get("initial")
    if not isinstance(initial, str):
        raise PipelineError("ParseError", "sketch needs an initial state name")
    terminals = doc.get("terminals")
    if not isinstance(terminals, list) or not all(isinstance(t, str) for t in terminals):
        raise PipelineError("ParseError", "sketch needs a terminals list of names")
    transitions_doc = doc.get("transitions", [])
    if not isinstance(transitions_doc, list):
        raise PipelineError("ParseError", "sketch transitions must be a list")
    transitions = []
    for t in transitions_doc:
        if (not isinstance(t, dict) or not isinstance(t.get("from"), str)
                or not isinstance(t.get("to"), str)):
            raise PipelineError("ParseError", f"bad sketch transition {t!r}")
        transitions.append({"from": t["from"], "to": t["to"],
                            "condition": str(t.get("condition", ""))})
    sketch = FsmSketch(initial=initial, terminals=tuple(terminals),
                       states=tuple(states), transitions=tuple(transitions))
    sketch.validate_structure()
    return sketch


def _render_api_docs(api_docs) -> str:
    lines = ["Available API functions:"]
    for desc in api_docs:
        lines.append(f"- {desc.signature()}  # {desc.description}")
    return "\n".join(lines)


def _render_environment(environment: dict) -> str:
    lines = ["Known environment:"]
    for device in environment.get("devices", []):
        lines.append(f"- device {device['id']} ({device['kind']}) at "
                     f"{device['location']}: {device.get('description', '')}")
    for module in environment.get("modules", []):
        lines.append(f"- module {module['id']}: {module.get('capability', '')}")
    return "\n".join(lines)


GUARD_EXAMPLES = (
    "Guard examples:\n"
    '- len(pending) > 0\n'
    '- rates["Eason"]["tier"] == "Low"\n'
    "- count > 2 and not done\n"
    "- else  (catch-all; always true, place it last)"
)


class Pipeline:
    """Stateless orchestration of the three phases against one provider and
    one API registry.  Safe to share across sessions."""

    def __init__(self, provider, registry: ApiRegistry):
        self.provider = provider
        self.registry = registry

    # -- phase 1 ------------------------------------------------------------

    def enrich(self, instruction: str, snapshot: ContextSnapshot) -> EnrichedTask:
        directive = (f"Enrich the instruction with the relevant devices and "
                     f"locations: {instruction}")
        messages = (
            Message(ROLE_SYSTEM, _render_environment(snapshot.environment)),
            Message(ROLE_USER, directive),
        )
        enriched = self.provider.complete(
            CompletionRequest(purpose=PURPOSE_CHAT, messages=messages))
        known_devices = [d["id"] for d in snapshot.environment.get("devices", [])]
        known_modules = [m["id"] for m in snapshot.environment.get("modules", [])]
        lowered = enriched.lower()
        devices = tuple(d for d in known_devices if d.lower() in lowered)
        modules = tuple(m for m in known_modules if m.lower() in lowered)
        unknown = [word for word in re.findall(r"[a-z_]+_[a-z_0-9]+", lowered)
                   if word not in [d.lower() for d in known_devices]
                   and word not in [m.lower() for m in known_modules]]
        if unknown:
            log.warning("enrichment mentions unknown device-like ids %s; ignoring",
                        sorted(set(unknown)))
        return EnrichedTask(original=instruction, enriched=enriched,
                            referenced_devices=devices, referenced_modules=modules)

    # -- phase 2 ------------------------------------------------------------

    def derive_fsm(self, task: EnrichedTask, api_docs, retry: int = 0,
                   last_error: Optional[str] = None) -> FsmSketch:
        directive = f"Design a state machine for the task: {task.enriched}"
        if retry > 0:
            directive += f" [retry {retry}; last error: {last_error}]"
        messages = (
            Message(ROLE_SYSTEM,
                    "Respond with one JSON object of the form "
                    '{"initial": name, "terminals": [names], '
                    '"states": [{"name", "goal"}], '
                    '"transitions": [{"from", "to", "condition"}]}. '
                    "Stage names must be lowercase identifiers."),
            Message(ROLE_SYSTEM, _render_api_docs(api_docs)),
            Message(ROLE_USER, directive),
        )
        text = self.provider.complete(
            CompletionRequest(purpose=PURPOSE_FSM_DERIVE, messages=messages))
        return parse_sketch(text)

    # -- phase 3, sub-phase 1 ------------------------------------------------

    def generate_stage_ops(self, sketch: FsmSketch, task: EnrichedTask, api_docs) -> dict:
        ops: dict = {}
        docs_message = Message(ROLE_SYSTEM, _render_api_docs(api_docs))
        for state in sketch.states:
            directive = (f"List the actions for stage '{state.name}' ({state.goal}) "
                         f"of task: {task.original}")
            messages = (
                Message(ROLE_SYSTEM,
                        "Respond with a JSON list of actions, each "
                        '{"owner", "fn", "args": [expression strings], "bind"?}. '
                        "An empty list is fine for stages with no operations."),
                docs_message,
                Message(ROLE_USER, directive),
            )
            text = self.provider.complete(
                CompletionRequest(purpose=PURPOSE_STAGE_OPS, messages=messages))
            ops[state.name] = self._parse_actions(text, where=f"stage {state.name!r}")
        return ops

    def _parse_actions(self, text: str, where: str) -> tuple:
        doc = _extract_json(text)
        if not isinstance(doc, list):
            raise PipelineError("ParseError", f"{where}: actions must be a JSON list")
        actions = []
        for i, action_doc in enumerate(doc):
            ctx = f"{where} action [{i}]"
            if not isinstance(action_doc, dict):
                raise PipelineError("ParseError", f"{ctx}: must be an object")
            owner = action_doc.get("owner")
            fn = action_doc.get("fn")
            if not isinstance(owner, str) or not isinstance(fn, str):
                raise PipelineError("ParseError", f"{ctx}: needs string owner and fn")
            args_doc = action_doc.get("args", [])
            if not isinstance(args_doc, list):
                raise PipelineError("ParseError", f"{ctx}: args must be a list")
            args = []
            for j, arg_text in enumerate(args_doc):
                if not isinstance(arg_text, str):
                    raise PipelineError("ParseError",
                                        f"{ctx}: arg[{j}] must be an expression string")
                try:
                    args.append(exprs.parse(arg_text))
                except exprs.ExprSyntaxError as exc:
                    raise PipelineError("ExprParseError", f"{ctx}: arg[{j}]: {exc}") from exc
            bind = action_doc.get("bind")
            if bind is not None and (not isinstance(bind, str) or not _NAME_RE.match(bind)):
                raise PipelineError("ParseError", f"{ctx}: bad bind name {bind!r}")
            try:
                descriptor = self.registry.resolve(owner, fn)
            except UnknownFunctionError as exc:
                raise PipelineError("UnknownFunction", f"{ctx}: {exc}") from exc
            if len(args) != len(descriptor.params):
                raise PipelineError(
                    "ArityMismatch",
                    f"{ctx}: {owner}.{fn} takes {len(descriptor.params)} args, got {len(args)}")
            actions.append(ApiCall(owner=owner, fn=fn, args=tuple(args), bind=bind))
        return tuple(actions)

    # -- phase 3, sub-phase 2 ------------------------------------------------

    def generate_transitions(self, sketch: FsmSketch, task: EnrichedTask) -> list:
        if not sketch.transitions:
            return []
        listing = "; ".join(f"{t['from']}->{t['to']} ({t['condition']})"
                            for t in sketch.transitions)
        directive = f"Write guards for the transitions of task: {task.original} | {listing}"
        messages = (
            Message(ROLE_SYSTEM,
                    "Respond with a JSON list of transitions, each "
                    '{"from", "to", "guard": expression string}. '
                    "Guards are tried in order; use else as the final catch-all."),
            Message(ROLE_SYSTEM, GUARD_EXAMPLES),
            Message(ROLE_USER, directive),
        )
        text = self.provider.complete(
            CompletionRequest(purpose=PURPOSE_TRANSITIONS, messages=messages))
        doc = _extract_json(text)
        if not isinstance(doc, list):
            raise PipelineError("ParseError", "transitions must be a JSON list")
        wanted = sorted((t["from"], t["to"]) for t in sketch.transitions)
        transitions = []
        for i, t_doc in enumerate(doc):
            ctx = f"transition [{i}]"
            if (not isinstance(t_doc, dict) or not isinstance(t_doc.get("from"), str)
                    or not isinstance(t_doc.get("to"), str)
                    or not isinstance(t_doc.get("guard"), str)):
                raise PipelineError("ParseError", f"{ctx}: needs from, to and a guard string")
            try:
                guard = exprs.parse(t_doc["guard"])
            except exprs.ExprSyntaxError as exc:
                raise PipelineError("ExprParseError", f"{ctx}: {exc}") from exc
            transitions.append(Transition(source=t_doc["from"], target=t_doc["to"],
                                          guard=guard))
        got = sorted((t.source, t.target) for t in transitions)
        if got != wanted:
            raise PipelineError(
                "StructureError",
                f"guard set does not match the sketch transitions: wanted {wanted}, got {got}")
        # Coverage: a non-terminal stage whose guards lack a catch-all cannot
        # be proven to always move on.
        by_source: dict = {}
        for t in transitions:
            by_source.setdefault(t.source, []).append(t)
        for state in sketch.states:
            if state.name in sketch.terminals:
                continue
            guards = by_source.get(state.name, [])
            if not any(isinstance(t.guard, exprs.Else) for t in guards):
                raise PipelineError(
                    "NonexhaustiveGuards",
                    f"non-terminal stage {state.name!r} has no else guard; "
                    f"its guards may all be false")
        return transitions

    # -- phase 3, sub-phase 3 (no provider call) -------------------------------

    def assemble_program(self, sketch: FsmSketch, stage_ops: dict,
                         transitions: list) -> FsmProgram:
        variables: dict = {}
        states = []
        for state in sketch.states:
            actions = stage_ops.get(state.name, ())
            for action in actions:
                if action.bind is None:
                    continue
                try:
                    kind = self.registry.resolve(action.owner, action.fn).returns
                except UnknownFunctionError:
                    kind = "any"
                previous = variables.get(action.bind)
                if previous is None or previous == kind:
                    variables[action.bind] = kind
                elif "any" in (previous, kind):
                    variables[action.bind] = "any"
                else:
                    raise PipelineError(
                        "BindConflict",
                        f"variable {action.bind!r} bound as {previous} and as {kind}")
            states.append(ProgramState(name=state.name, actions=tuple(actions)))
        return FsmProgram(
            initial=sketch.initial,
            terminals=tuple(sketch.terminals),
            variables=variables,
            states=tuple(states),
            transitions=tuple(transitions),
        )

    # -- all together ----------------------------------------------------------

    def generate(self, instruction: str, snapshot: ContextSnapshot,
                 retry: int = 0, last_error: Optional[str] = None) -> FsmProgram:
        """One full generation attempt (no retrying here; the coordinator
        owns the loop and the error-context feedback)."""
        task = self.enrich(instruction, snapshot)
        api_docs = snapshot.api_docs
        sketch = self.derive_fsm(task, api_docs, retry=retry, last_error=last_error)
        stage_ops = self.generate_stage_ops(sketch, task, api_docs)
        transitions = self.generate_transitions(sketch, task)
        program = self.assemble_program(sketch, stage_ops, transitions)
        log.info("generated program for %r: %d states, %d transitions",
                 instruction, len(program.states), len(program.transitions))
        return program


# ---------------------------------------------------------------------------
# Validation


def _reachable_from(start: str, edges: dict) -> set:
    seen = {start}
    stack = [start]
    while stack:
        node = stack.pop()
        for nxt in edges.get(node, ()):
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen


def validate_program(program: FsmProgram, registry: ApiRegistry,
                     ping: bool = True) -> ValidationReport:
    """Preliminary feasibility validation: schema integrity, registry
    resolution with arity and kind checks, graph reachability, guard typing
    and device liveness.  Collects every failure rather than stopping at the
    first."""
    report = ValidationReport()
    names = program.state_names()
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        report.add("error", "SchemaError", f"duplicate state names {dupes}")
    known = set(names)
    if program.initial not in known:
        report.add("error", "SchemaError", f"initial state {program.initial!r} not defined")
    if not program.terminals:
        report.add("error", "SchemaError", "program declares no terminal states")
    for terminal in program.terminals:
        if terminal not in known:
            report.add("error", "SchemaError", f"terminal {terminal!r} not defined")
    for kind_name, kind in program.variables.items():
        if kind not in ("number", "boolean", "string", "list", "record", "null", "any"):
            report.add("error", "SchemaError",
                       f"variable {kind_name!r} has unknown kind {kind!r}")

    owners_used = []
    for state in program.states:
        for i, action in enumerate(state.actions):
            where = f"state {state.name!r} action [{i}]"
            try:
                descriptor = registry.resolve(action.owner, action.fn)
            except UnknownFunctionError as exc:
                report.add("error", "UnknownFunction", str(exc), where)
                continue
            if action.owner not in owners_used:
                owners_used.append(action.owner)
            if len(action.args) != len(descriptor.params):
                report.add("error", "ArityMismatch",
                           f"{action.owner}.{action.fn} takes {len(descriptor.params)} "
                           f"args, got {len(action.args)}", where)
                continue
            for arg, p in zip(action.args, descriptor.params):
                try:
                    kind = exprs.typecheck(arg, program.variables)
                except exprs.ExprTypeError as exc:
                    report.add("error", exc.code, f"argument {p.name!r}: {exc}", where)
                    continue
                if p.kind != "any" and kind != "any" and kind != p.kind:
                    report.add("error", "KindMismatch",
                               f"argument {p.name!r} wants {p.kind}, expression has "
                               f"{kind}", where)
            if action.bind is not None:
                declared = program.variables.get(action.bind)
                if declared is None:
                    report.add("error", "SchemaError",
                               f"bind {action.bind!r} is not a declared variable", where)
                elif (declared != "any" and descriptor.returns != "any"
                        and declared != descriptor.returns):
                    report.add("error", "KindMismatch",
                               f"bind {action.bind!r} declared {declared} but "
                               f"{action.owner}.{action.fn} returns {descriptor.returns}",
                               where)

    edges: dict = {name: [] for name in names}
    for i, transition in enumerate(program.transitions):
        where = f"transition [{i}] {transition.source!r}->{transition.target!r}"
        missing = [s for s in (transition.source, transition.target) if s not in known]
        if missing:
            report.add("error", "SchemaError", f"unknown endpoint {missing}", where)
            continue
        edges[transition.source].append(transition.target)
        try:
            kind = exprs.typecheck(transition.guard, program.variables)
        except exprs.ExprTypeError as exc:
            report.add("error", exc.code, f"guard: {exc}", where)
            continue
        if kind not in ("boolean", "any"):
            report.add("error", "GuardType", f"guard has kind {kind}, needs boolean", where)

    if program.initial in known:
        reachable = _reachable_from(program.initial, edges)
        for name in names:
            if name not in reachable:
                report.add("error", "ReachabilityError",
                           f"state {name!r} unreachable from initial")
        terminals = set(program.terminals) & known
        for name in sorted(reachable):
            if not (_reachable_from(name, edges) & terminals):
                report.add("error", "ReachabilityError",
                           f"no terminal reachable from state {name!r}")

    for state in program.states:
        if state.name in program.terminals:
            continue
        outgoing = program.transitions_from(state.name)
        if not outgoing:
            report.add("error", "ReachabilityError",
                       f"non-terminal state {state.name!r} has no outgoing transition")
        elif not any(isinstance(t.guard, exprs.Else) for t in outgoing):
            report.add("warning", "NonexhaustiveGuards",
                       f"state {state.name!r} has no else guard")

    if ping:
        liveness = registry.ping(owners_used)
        for owner, alive in sorted(liveness.items()):
            if not alive:
                report.add("error", "HardwareUnavailable", f"device {owner!r} is not responding")
    return report
