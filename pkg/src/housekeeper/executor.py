"""Step-budgeted interpreter for FSM control programs.

The executor walks the state machine, dispatching actions through the API
registry and picking transitions by guard order.  Every action and every
taken transition consumes one step from the budget, so a looping program
always halts with a budget failure instead of hanging the session.

It also owns the ``util`` function family: small pure helpers (list surgery,
observation merging) that generated programs lean on for data plumbing.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from . import exprs
from .exprs import ExprEvalError
from .program import FsmProgram
from .registry import (
    ApiDescriptor,
    ApiError,
    ApiRegistry,
    RegistryError,
    param,
)

log = logging.getLogger(__name__)

DEFAULT_STEP_BUDGET = 1000

STATUS_SUCCESS = "success"
STATUS_TERMINATED = "terminated"
STATUS_FAILED = "failed"


@dataclass
class ExecutionReport:
    status: str
    visited_states: list
    outputs: dict
    logs: list
    steps_used: int
    wall_time: float
    reason: Optional[str] = None          # set when terminated
    error: Optional[dict] = None          # {"code", "message"} when failed

    @property
    def success(self) -> bool:
        return self.status == STATUS_SUCCESS

    def to_json_dict(self) -> dict:
        doc = {
            "status": self.status,
            "visited_states": list(self.visited_states),
            "outputs": self.outputs,
            "steps_used": self.steps_used,
            "wall_time": round(self.wall_time, 6),
            "logs": list(self.logs),
        }
        if self.reason is not None:
            doc["reason"] = self.reason
        if self.error is not None:
            doc["error"] = self.error
        return doc


def _exec_log(level: str, message: str, payload: Optional[dict] = None) -> dict:
    entry = {"level": level, "source": "executor", "message": message}
    if payload:
        entry["payload"] = payload
    return entry


class Executor:
    def __init__(self, registry: ApiRegistry, step_budget: int = DEFAULT_STEP_BUDGET):
        self.registry = registry
        self.step_budget = step_budget

    def run(self, program: FsmProgram, budget: Optional[int] = None,
            on_state: Optional[Callable] = None) -> ExecutionReport:
        """Run to completion.  Never raises for program-level trouble; every
        outcome comes back as a report."""
        budget = budget if budget is not None else self.step_budget
        env: dict = {}
        logs: list = []
        visited: list = []
        steps = 0
        wall = 0.0

        def failed(code: str, message: str) -> ExecutionReport:
            logs.append(_exec_log("error", message, {"code": code}))
            return ExecutionReport(
                status=STATUS_FAILED, visited_states=visited, outputs=env,
                logs=logs, steps_used=steps, wall_time=wall,
                error={"code": code, "message": message})

        state_name = program.initial
        while True:
            visited.append(state_name)
            try:
                state = program.state(state_name)
            except KeyError:
                return failed("UnknownState", f"no state named {state_name!r}")

            action_error: Optional[ApiError] = None
            for action in state.actions:
                if steps >= budget:
                    return failed("BudgetExceeded", f"step budget of {budget} exhausted")
                steps += 1
                try:
                    args = [exprs.evaluate(a, env) for a in action.args]
                except ExprEvalError as exc:
                    return failed(exc.code, f"argument of {action.owner}.{action.fn}: {exc}")
                try:
                    desc = self.registry.resolve(action.owner, action.fn)
                    value = self.registry.call(action.owner, action.fn, args, log_sink=logs)
                except ApiError as exc:
                    wall += desc.expected_latency
                    if exc.fatal:
                        logs.append(_exec_log(
                            "error", f"terminated in state {state_name!r}: {exc.message}",
                            {"code": exc.code}))
                        return ExecutionReport(
                            status=STATUS_TERMINATED, visited_states=visited, outputs=env,
                            logs=logs, steps_used=steps, wall_time=wall, reason=exc.message)
                    action_error = exc
                    logs.append(_exec_log(
                        "warning",
                        f"state {state_name!r} failed at {action.owner}.{action.fn}; "
                        f"skipping its remaining actions", {"code": exc.code}))
                    break
                except RegistryError as exc:
                    return failed(type(exc).__name__, str(exc))
                wall += desc.expected_latency
                if action.bind is not None:
                    env[action.bind] = value

            if on_state is not None:
                on_state(state_name, dict(env))

            chosen = None
            for transition in program.transitions_from(state_name):
                try:
                    verdict = exprs.evaluate(transition.guard, env)
                except ExprEvalError as exc:
                    logs.append(_exec_log(
                        "warning",
                        f"guard {state_name!r}->{transition.target!r} errored, treating as "
                        f"false: {exc}", {"code": exc.code}))
                    continue
                if not isinstance(verdict, bool):
                    logs.append(_exec_log(
                        "warning",
                        f"guard {state_name!r}->{transition.target!r} returned "
                        f"{exprs.kind_of(verdict)}, treating as false"))
                    continue
                if verdict:
                    chosen = transition
                    break

            if chosen is None:
                if state_name in program.terminals:
                    return ExecutionReport(
                        status=STATUS_SUCCESS, visited_states=visited, outputs=env,
                        logs=logs, steps_used=steps, wall_time=wall)
                detail = f" (after action error: {action_error.message})" if action_error else ""
                return failed("Stuck", f"no guard true in non-terminal state {state_name!r}{detail}")

            if steps >= budget:
                return failed("BudgetExceeded", f"step budget of {budget} exhausted")
            steps += 1
            state_name = chosen.target


# ---------------------------------------------------------------------------
# util owner: pure helpers available to every program


def _as_records(xs: list, context: str) -> list:
    for item in xs:
        if not isinstance(item, dict):
            raise ApiError("KindMismatch", f"{context} expects a list of records")
    return xs


def _merge_observations(a: dict, b: dict) -> dict:
    """Union two camera observations, keeping the best apparent quality per
    position.  Order: first-seen wins, so results stay deterministic."""
    merged: dict = {}
    order: list = []
    for obs in (a, b):
        for person in obs.get("persons_in_view", []):
            key = tuple(person["position"])
            if key not in merged:
                merged[key] = dict(person)
                order.append(key)
            elif person["apparent_face_quality"] > merged[key]["apparent_face_quality"]:
                merged[key] = dict(person)
    objects: list = []
    seen = set()
    for obs in (a, b):
        for obj in obs.get("objects_in_view", []):
            key = (obj.get("class"), tuple(obj.get("position", ())))
            if key not in seen:
                seen.add(key)
                objects.append(obj)
    return {
        "camera_id": "merged",
        "taken_at": max(a.get("taken_at", 0), b.get("taken_at", 0)),
        "persons_in_view": [merged[key] for key in order],
        "objects_in_view": objects,
    }


def _head(xs: list) -> Any:
    if not xs:
        raise ApiError("EmptyList", "head of an empty list")
    return xs[0]


def _tail(xs: list) -> list:
    return list(xs[1:])


def _count(xs: list) -> int:
    return len(xs)


def _field_of(item: dict, key: str) -> Any:
    if key not in item:
        raise ApiError("MissingKey", f"record lacks key {key!r}")
    return item[key]


def _filter_eq(xs: list, key: str, value: Any) -> list:
    return [item for item in _as_records(xs, "filter_eq")
            if exprs.strict_eq(_field_of(item, key), value)]


def _filter_ne(xs: list, key: str, value: Any) -> list:
    return [item for item in _as_records(xs, "filter_ne")
            if not exprs.strict_eq(_field_of(item, key), value)]


def _pluck(xs: list, key: str) -> list:
    return [_field_of(item, key) for item in _as_records(xs, "pluck")]


def register_util(registry: ApiRegistry) -> None:
    specs = [
        ("merge_observations", (param("a", "record"), param("b", "record")), "record",
         "Union two camera observations, keeping the clearest view of each person.",
         _merge_observations),
        ("head", (param("xs", "list"),), "any",
         "First element of a list; errors on an empty list.", _head),
        ("tail", (param("xs", "list"),), "list",
         "Everything after the first element.", _tail),
        ("count", (param("xs", "list"),), "number",
         "Number of elements in a list.", _count),
        ("filter_eq", (param("xs", "list"), param("key", "string"), param("value", "any")), "list",
         "Records whose field equals the value.", _filter_eq),
        ("filter_ne", (param("xs", "list"), param("key", "string"), param("value", "any")), "list",
         "Records whose field differs from the value.", _filter_ne),
        ("pluck", (param("xs", "list"), param("key", "string")), "list",
         "Extract one field from every record.", _pluck),
    ]
    for name, params, returns, description, handler in specs:
        registry.register(
            ApiDescriptor(owner="util", name=name, params=params, returns=returns,
                          description=description, expected_latency=0.0),
            handler)
