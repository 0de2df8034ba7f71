from __future__ import annotations

import random

import pytest

from housekeeper import exprs
from housekeeper.executor import Executor
from housekeeper.pipeline import validate_program
from housekeeper.program import (
    ApiCall,
    FsmProgram,
    ProgramState,
    Transition,
    from_json_dict,
)
from housekeeper.registry import ApiRegistry
from conftest import golden_program
from progen import make_program


def linear(*states, variables=None, transitions=None, terminals=None,
           initial=None) -> FsmProgram:
    names = [s.name for s in states]
    if transitions is None:
        transitions = [Transition(source=a, target=b, guard=exprs.Else())
                       for a, b in zip(names, names[1:])]
    return FsmProgram(
        initial=initial or names[0],
        terminals=tuple(terminals if terminals is not None else [names[-1]]),
        variables=variables or {},
        states=tuple(states),
        transitions=tuple(transitions),
    )


def util_call(fn: str, *args, bind=None) -> ApiCall:
    return ApiCall(owner="util", fn=fn,
                   args=tuple(exprs.Lit(a) if not isinstance(a, exprs.Expr)
                              else a for a in args),
                   bind=bind)


class TestRun:
    def test_empty_terminal_program(self, registry1):
        program = linear(ProgramState(name="done", actions=()))
        report = Executor(registry1).run(program)
        assert report.status == "success"
        assert report.visited_states == ["done"]
        assert report.steps_used == 0

    def test_binds_update_outputs(self, registry1):
        program = linear(
            ProgramState(name="work", actions=(
                util_call("count", ["a", "b", "c"], bind="n"),
                util_call("tail", ["a", "b", "c"], bind="rest"),
            )),
            ProgramState(name="done", actions=()),
            variables={"n": "number", "rest": "list"},
        )
        report = Executor(registry1).run(program)
        assert report.success
        assert report.outputs == {"n": 3, "rest": ["b", "c"]}
        assert report.steps_used == 3  # two actions + one transition

    def test_guard_selection_first_true_wins(self, registry1):
        program = linear(
            ProgramState(name="pick", actions=(
                util_call("count", [1, 2], bind="n"),)),
            ProgramState(name="low", actions=()),
            ProgramState(name="high", actions=()),
            variables={"n": "number"},
            transitions=[
                Transition("pick", "high", exprs.parse("n > 10")),
                Transition("pick", "low", exprs.Else()),
                Transition("low", "high", exprs.Else()),
            ],
            terminals=["high"],
        )
        report = Executor(registry1).run(program)
        assert report.visited_states == ["pick", "low", "high"]

    def test_on_state_sees_env_after_each_state(self, registry1):
        seen: list = []
        program = linear(
            ProgramState(name="a", actions=(util_call("count", [1], bind="n"),)),
            ProgramState(name="b", actions=()),
            variables={"n": "number"},
        )
        Executor(registry1).run(program, on_state=lambda name, env: seen.append(
            (name, dict(env))))
        assert seen == [("a", {"n": 1}), ("b", {"n": 1})]

    def test_step_budget_exhaustion(self, registry1):
        # two-state loop with no terminal exit taken
        program = linear(
            ProgramState(name="ping", actions=()),
            ProgramState(name="pong", actions=()),
            transitions=[Transition("ping", "pong", exprs.Else()),
                         Transition("pong", "ping", exprs.Else())],
            terminals=["never"],
        )
        # terminals must exist; declare a third unreachable one
        program = FsmProgram(
            initial="ping", terminals=("stop",), variables={},
            states=program.states + (ProgramState(name="stop", actions=()),),
            transitions=program.transitions)
        report = Executor(registry1, step_budget=25).run(program)
        assert report.status == "failed"
        assert report.error["code"] == "BudgetExceeded"
        assert report.steps_used == 25

    def test_stuck_without_else(self, registry1):
        program = linear(
            ProgramState(name="a", actions=()),
            ProgramState(name="b", actions=()),
            transitions=[Transition("a", "b", exprs.parse("1 > 2"))],
        )
        report = Executor(registry1).run(program)
        assert report.status == "failed"
        assert report.error["code"] == "Stuck"

    def test_guard_eval_error_treated_as_false(self, registry1):
        program = linear(
            ProgramState(name="a", actions=()),
            ProgramState(name="b", actions=()),
            variables={"ghost": "number"},
            transitions=[
                Transition("a", "a", exprs.parse("ghost > 0")),  # unbound
                Transition("a", "b", exprs.Else()),
            ],
        )
        report = Executor(registry1).run(program)
        assert report.success
        assert any("treating as false" in l["message"] for l in report.logs)

    def test_fatal_api_error_terminates(self, registry2):
        program = linear(
            ProgramState(name="push", actions=(
                ApiCall(owner="router", fn="set_tier",
                        args=(exprs.Lit("Ada"), exprs.Lit("Turbo")), bind=None),)),
            ProgramState(name="done", actions=()),
        )
        report = Executor(registry2).run(program)
        assert report.status == "terminated"
        assert "Turbo" in report.reason
        assert report.visited_states == ["push"]

    def test_nonfatal_api_error_skips_rest_of_state(self, registry1):
        program = linear(
            ProgramState(name="a", actions=(
                util_call("head", [], bind="x"),        # EmptyList, non-fatal
                util_call("count", [1, 2], bind="n"),   # must be skipped
            )),
            ProgramState(name="b", actions=()),
        )
        report = Executor(registry1).run(program)
        assert report.success
        assert "n" not in report.outputs
        assert any("skipping its remaining actions" in l["message"]
                   for l in report.logs)

    def test_argument_eval_failure_fails_run(self, registry1):
        program = linear(
            ProgramState(name="a", actions=(
                ApiCall(owner="util", fn="count", args=(exprs.Var("nothing"),),
                        bind=None),)),
            ProgramState(name="b", actions=()),
        )
        report = Executor(registry1).run(program)
        assert report.status == "failed"
        assert report.error["code"] == "UndefinedVariable"

    def test_unknown_function_fails_run(self, registry1):
        program = linear(
            ProgramState(name="a", actions=(
                ApiCall(owner="util", fn="nope", args=(), bind=None),)),
            ProgramState(name="b", actions=()),
        )
        report = Executor(registry1).run(program)
        assert report.status == "failed"
        assert report.error["code"] == "UnknownFunctionError"

    def test_wall_time_accumulates_latency(self, registry1):
        program = linear(
            ProgramState(name="snap", actions=(
                ApiCall(owner="camera_north", fn="capture", args=(), bind="obs"),)),
            ProgramState(name="done", actions=()),
            variables={"obs": "record"},
        )
        report = Executor(registry1).run(program)
        assert report.wall_time == pytest.approx(0.2)

    def test_report_json_shape(self, registry1):
        report = Executor(registry1).run(
            linear(ProgramState(name="done", actions=())))
        doc = report.to_json_dict()
        assert set(doc) == {"status", "visited_states", "outputs", "steps_used",
                            "wall_time", "logs"}


class TestGoldenExecution:
    def test_scenario1_outputs(self, registry1):
        program = from_json_dict(golden_program("scenario1"))
        report = Executor(registry1).run(program)
        assert report.success
        assert report.outputs["people_count"] == 5
        assert report.outputs["known"] == ["Mike", "Ada", "Joe"]
        assert report.outputs["unknown_locations"] == [[10, 1], [12, 5]]
        assert report.visited_states == [
            "scan_room", "analyze", "visit_next", "visit_next", "wrap_up"]

    def test_scenario2_first_and_second_run(self, registry2):
        program = from_json_dict(golden_program("scenario2"))
        executor = Executor(registry2)

        first = executor.run(program)
        assert first.success
        assert first.outputs["change"]["tier"] == "Normal"
        assert first.outputs["change"]["total_mbps"] == 100

        second = executor.run(program)
        assert second.status == "terminated"
        assert "100 Mbps limit" in second.reason
        assert second.visited_states == ["check_rates", "raise_to_high"]


class TestSoundness:
    def test_valid_programs_never_raise(self, registry1):
        """Validator-approved programs must always come back as a report.

        The generator can produce runtime misbehavior (unbound vars, empty
        lists, kind drift through "any") on purpose; none of it may escape
        run() as an exception.
        """
        rng = random.Random(0x5EED)
        executor = Executor(registry1, step_budget=400)
        ran = 0
        statuses: dict = {}
        while ran < 500:
            program = make_program(rng, registry1)
            check = validate_program(program, registry1)
            if not check.ok:
                # generator bug: it promises validator-clean programs
                raise AssertionError(f"generator made an invalid program: "
                                     f"{check.summary()}")
            report = executor.run(program)
            statuses[report.status] = statuses.get(report.status, 0) + 1
            ran += 1
        # sanity: the space is diverse enough to mean something
        assert statuses.get("success", 0) > 50
        assert len(statuses) >= 2, statuses

    def test_round_tripped_programs_behave_identically(self):
        from housekeeper.ai_modules import register_modules
        from housekeeper.devices import build_scene, register_scene
        from housekeeper.executor import register_util
        from conftest import scene1_doc

        def fresh_registry() -> ApiRegistry:
            scene = build_scene(scene1_doc())
            registry = ApiRegistry()
            register_scene(scene, registry)
            register_modules(scene, registry)
            register_util(registry)
            return registry

        rng = random.Random(11)
        for _ in range(40):
            program = make_program(rng, fresh_registry())
            mirrored = from_json_dict(program.to_json_dict())
            # devices are stateful (clock ticks, robot drives), so each run
            # gets its own scene
            a = Executor(fresh_registry(), step_budget=200).run(program)
            b = Executor(fresh_registry(), step_budget=200).run(mirrored)
            assert (a.status, a.visited_states, a.outputs) == (
                b.status, b.visited_states, b.outputs)
