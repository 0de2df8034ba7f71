"""FSM control-program document model.

A program is plain data: states with action lists, guarded transitions, and
declared variables.  The JSON wire form is canonical (fixed key order, no
extraneous whitespace differences) so identical programs serialize to
identical bytes, which the script cache and the transcript tests rely on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

from . import exprs
from .exprs import Expr

# Declared variable kinds; "any" is allowed for binds whose element kind the
# descriptor cannot pin down (e.g. util.head).
DECLARABLE_KINDS = exprs.VALUE_KINDS + ("any",)


class ProgramDecodeError(Exception):
    pass


@dataclass(frozen=True)
class ApiCall:
    owner: str
    fn: str
    args: tuple
    bind: Optional[str] = None

    def to_json_dict(self) -> dict:
        doc = {
            "owner": self.owner,
            "fn": self.fn,
            "args": [exprs.to_json_dict(a) for a in self.args],
        }
        if self.bind is not None:
            doc["bind"] = self.bind
        return doc


@dataclass(frozen=True)
class ProgramState:
    name: str
    actions: tuple

    def to_json_dict(self) -> dict:
        return {"name": self.name, "actions": [a.to_json_dict() for a in self.actions]}


@dataclass(frozen=True)
class Transition:
    source: str
    target: str
    guard: Expr

    def to_json_dict(self) -> dict:
        return {"from": self.source, "to": self.target, "guard": exprs.to_json_dict(self.guard)}


@dataclass
class FsmProgram:
    initial: str
    terminals: tuple
    variables: dict = field(default_factory=dict)
    states: tuple = ()
    transitions: tuple = ()

    def state(self, name: str) -> ProgramState:
        for state in self.states:
            if state.name == name:
                return state
        raise KeyError(name)

    def state_names(self) -> list:
        return [state.name for state in self.states]

    def transitions_from(self, name: str) -> list:
        return [t for t in self.transitions if t.source == name]

    def to_json_dict(self) -> dict:
        return {
            "initial": self.initial,
            "terminals": list(self.terminals),
            "vars": dict(self.variables),
            "states": [s.to_json_dict() for s in self.states],
            "transitions": [t.to_json_dict() for t in self.transitions],
        }

    def to_canonical_json(self) -> str:
        return json.dumps(self.to_json_dict(), separators=(",", ":"))


def _require(doc: dict, key: str, types, where: str):
    if key not in doc:
        raise ProgramDecodeError(f"{where}: missing {key!r}")
    value = doc[key]
    if not isinstance(value, types):
        raise ProgramDecodeError(f"{where}: {key!r} has wrong type {type(value).__name__}")
    return value


def _no_strays(doc: dict, allowed: tuple, where: str) -> None:
    strays = [key for key in doc if key not in allowed]
    if strays:
        raise ProgramDecodeError(f"{where}: unknown keys {strays}")


def from_json_dict(doc: dict) -> FsmProgram:
    """Decode and shape-check a program document.

    Only structural errors are caught here; semantic validation (state graph,
    function bindings, guard kinds) lives in pipeline.validate_program.
    """
    if not isinstance(doc, dict):
        raise ProgramDecodeError(f"program must be an object, got {type(doc).__name__}")
    _no_strays(doc, ("initial", "terminals", "vars", "states", "transitions"), "program")
    initial = _require(doc, "initial", str, "program")
    terminals = _require(doc, "terminals", list, "program")
    for name in terminals:
        if not isinstance(name, str):
            raise ProgramDecodeError("program: terminals must be state names")
    variables_doc = _require(doc, "vars", dict, "program")
    variables = {}
    for name, kind in variables_doc.items():
        if not isinstance(name, str) or not isinstance(kind, str):
            raise ProgramDecodeError("program: vars must map names to kinds")
        if kind not in DECLARABLE_KINDS:
            raise ProgramDecodeError(f"program: unknown kind {kind!r} for var {name!r}")
        variables[name] = kind

    states_doc = _require(doc, "states", list, "program")
    states = []
    for i, state_doc in enumerate(states_doc):
        where = f"states[{i}]"
        if not isinstance(state_doc, dict):
            raise ProgramDecodeError(f"{where}: must be an object")
        _no_strays(state_doc, ("name", "actions"), where)
        name = _require(state_doc, "name", str, where)
        actions_doc = _require(state_doc, "actions", list, where)
        actions = []
        for j, action_doc in enumerate(actions_doc):
            actions.append(_decode_action(action_doc, f"{where}.actions[{j}]"))
        states.append(ProgramState(name=name, actions=tuple(actions)))

    transitions_doc = _require(doc, "transitions", list, "program")
    transitions = []
    for i, t_doc in enumerate(transitions_doc):
        where = f"transitions[{i}]"
        if not isinstance(t_doc, dict):
            raise ProgramDecodeError(f"{where}: must be an object")
        _no_strays(t_doc, ("from", "to", "guard"), where)
        source = _require(t_doc, "from", str, where)
        target = _require(t_doc, "to", str, where)
        guard_doc = _require(t_doc, "guard", dict, where)
        try:
            guard = exprs.from_json_dict(guard_doc)
        except exprs.ExprDecodeError as exc:
            raise ProgramDecodeError(f"{where}: bad guard: {exc}") from exc
        transitions.append(Transition(source=source, target=target, guard=guard))

    return FsmProgram(
        initial=initial,
        terminals=tuple(terminals),
        variables=variables,
        states=tuple(states),
        transitions=tuple(transitions),
    )


def _decode_action(doc, where: str) -> ApiCall:
    if not isinstance(doc, dict):
        raise ProgramDecodeError(f"{where}: must be an object")
    _no_strays(doc, ("owner", "fn", "args", "bind"), where)
    owner = _require(doc, "owner", str, where)
    fn = _require(doc, "fn", str, where)
    args_doc = _require(doc, "args", list, where)
    args = []
    for k, arg_doc in enumerate(args_doc):
        try:
            args.append(exprs.from_json_dict(arg_doc))
        except exprs.ExprDecodeError as exc:
            raise ProgramDecodeError(f"{where}.args[{k}]: {exc}") from exc
    bind = doc.get("bind")
    if bind is not None and not isinstance(bind, str):
        raise ProgramDecodeError(f"{where}: bind must be a string")
    return ApiCall(owner=owner, fn=fn, args=tuple(args), bind=bind)


def loads(text: str) -> FsmProgram:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProgramDecodeError(f"program is not valid JSON: {exc}") from exc
    return from_json_dict(doc)
