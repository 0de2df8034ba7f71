"""Headless scenario replays.

Each scenario spins up a fresh runtime against its committed scene, drives the
dialog like a user would, checks the outcome, and can write both a
machine-readable (JSON lines) and a human transcript.  Replays are
deterministic: the mock provider, zero simulated latency and logical device
clocks leave nothing to vary between runs.
"""

from __future__ import annotations

import json
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .config import Config
from .runtime import FIXTURES, Runtime

SCENARIO1_INSTRUCTION = ("Can you help me to count the number of people in the room "
                         "and identify who they are?")
SCENARIO2_FIRST = "Can you improve my internet speed? My movie has a slight lag."
SCENARIO2_SECOND = "Can you increase my internet speed once more?"

PROBE_TEXT = "Do you require any assistance?"
SUMMARY_REQUEST_TEXT = "Please repeat the employer's instruction using as few words as possible."

SCENARIO_NAMES = ("scenario1", "scenario2")


@dataclass
class ScenarioResult:
    name: str
    checks: list = field(default_factory=list)  # (label, passed, detail)
    events: list = field(default_factory=list)  # event dicts, seq order

    @property
    def ok(self) -> bool:
        return all(passed for _, passed, _ in self.checks)

    def check(self, label: str, passed: bool, detail: str = "") -> None:
        self.checks.append((label, bool(passed), detail))

    def events_jsonl(self) -> str:
        return "".join(json.dumps(e, separators=(",", ":"), ensure_ascii=False) + "\n"
                       for e in self.events)

    def human_transcript(self) -> str:
        lines = []
        for event in self.events:
            seq, kind = event["seq"], event["kind"]
            role = event.get("role") or ""
            text = event.get("text") or ""
            if kind in ("message", "report", "error"):
                lines.append(f"[{seq:3}] {role}: {text}")
            elif kind == "trace":
                lines.append(f"[{seq:3}]   ({role}) {text}")
            else:
                payload = event.get("payload") or {}
                brief = json.dumps(_briefly(kind, payload), ensure_ascii=False,
                                   separators=(",", ":"))
                lines.append(f"[{seq:3}]   <{kind}> {brief}")
        return "\n".join(lines) + "\n"


def _briefly(kind: str, payload: dict) -> dict:
    if kind == "fsm":
        program = payload.get("program", {})
        return {"states": [s["name"] for s in program.get("states", [])],
                "initial": program.get("initial")}
    if kind == "snapshot":
        return {"state": payload.get("state")}
    if kind == "report":
        return {"status": payload.get("status")}
    if kind == "reporting":
        return {}
    return payload


def _run_session(scene_name: str, messages, rule_paths=None) -> tuple:
    """Drive one session through the given user messages; returns
    (events, runtime).  The runtime is already closed."""
    with tempfile.TemporaryDirectory(prefix="housekeeper-") as tmp:
        config = Config(
            scene_path=str(FIXTURES / "scenes" / f"{scene_name}.json"),
            rule_paths=[str(p) for p in (rule_paths or [])],
            cache_path=str(Path(tmp) / "cache.jsonl"),
        )
        runtime = Runtime(config)
        try:
            session = runtime.hub.create_session("Eason", session_id="scenario")
            for text in messages:
                runtime.hub.post_message(session.id, text)
                if not runtime.hub.wait_idle(session.id, timeout=60.0):
                    raise TimeoutError("session never went idle")
            events = [e.to_json_dict() for e in runtime.hub.events_since(session.id, 0)]
            return events, runtime
        finally:
            runtime.close()


def _find(events, kind, **fields):
    out = []
    for event in events:
        if event["kind"] != kind:
            continue
        if all(event.get(k) == v for k, v in fields.items()):
            out.append(event)
    return out


def run_scenario1(rule_paths=None) -> ScenarioResult:
    result = ScenarioResult(name="scenario1")
    events, runtime = _run_session("scenario1", [SCENARIO1_INSTRUCTION],
                                   rule_paths=rule_paths)
    result.events = events

    reports = _find(events, "report")
    result.check("one final report", len(reports) == 1, f"got {len(reports)}")
    if not reports:
        return result
    report = reports[0]
    payload = report["payload"]
    execution = payload.get("execution") or {}
    outputs = execution.get("outputs") or {}

    result.check("status success", payload.get("status") == "success",
                 str(payload.get("status")))
    result.check("people_count == 5", outputs.get("people_count") == 5,
                 str(outputs.get("people_count")))
    result.check("known == [Mike, Ada, Joe]",
                 outputs.get("known") == ["Mike", "Ada", "Joe"],
                 str(outputs.get("known")))
    result.check("unknown_locations == [[10,1],[12,5]]",
                 outputs.get("unknown_locations") == [[10, 1], [12, 5]],
                 str(outputs.get("unknown_locations")))
    text = report.get("text") or ""
    for token in ("5", "Mike", "Ada", "Joe", "[10, 1]", "[12, 5]"):
        result.check(f"report text mentions {token!r}", token in text, text[:80])

    probes = _find(events, "trace", role="assistant", text=PROBE_TEXT)
    result.check("probe asked verbatim", len(probes) == 1, f"got {len(probes)}")
    summary_asks = _find(events, "trace", role="assistant", text=SUMMARY_REQUEST_TEXT)
    result.check("summary requested verbatim", len(summary_asks) == 1,
                 f"got {len(summary_asks)}")
    summaries = _find(events, "trace", role="housekeeper",
                      text="Count people in room, identify them.")
    result.check("summary text exact", len(summaries) == 1, f"got {len(summaries)}")
    yes_replies = [e for e in _find(events, "trace", role="housekeeper")
                   if "Yes" in (e.get("text") or "")]
    result.check("probe reply carries Yes", len(yes_replies) >= 1, "")
    return result


def run_scenario2(rule_paths=None) -> ScenarioResult:
    result = ScenarioResult(name="scenario2")
    events, runtime = _run_session("scenario2",
                                   [SCENARIO2_FIRST, SCENARIO2_SECOND],
                                   rule_paths=rule_paths)
    result.events = events

    reports = _find(events, "report")
    result.check("two reports", len(reports) == 2, f"got {len(reports)}")
    if len(reports) != 2:
        return result
    first, second = reports

    result.check("first run success", first["payload"]["status"] == "success",
                 str(first["payload"]["status"]))
    first_exec = first["payload"]["execution"] or {}
    change = (first_exec.get("outputs") or {}).get("change") or {}
    result.check("Eason moved to Normal", change.get("tier") == "Normal", str(change))
    result.check("total after upgrade is 100", change.get("total_mbps") == 100,
                 str(change.get("total_mbps")))

    hits = _find(events, "cache_hit")
    result.check("second run hits the cache", len(hits) == 1, f"got {len(hits)}")
    if hits:
        result.check("cache score >= tau", hits[0]["payload"]["score"] >= 0.80,
                     str(hits[0]["payload"]["score"]))
    first_seq = first["seq"]
    late_generates = [e for e in _find(events, "generating") if e["seq"] > first_seq]
    result.check("zero generate events on the follow-up", not late_generates,
                 f"got {len(late_generates)}")

    result.check("second run terminated",
                 second["payload"]["status"] == "terminated",
                 str(second["payload"]["status"]))
    reason = (second["payload"]["execution"] or {}).get("reason") or ""
    result.check("reason cites the 100 Mbps limit", "100 Mbps limit" in reason, reason)

    router = runtime.scene.router
    result.check("router unchanged after rejection",
                 router.users.get("Eason") == "Normal", str(router.users))
    result.check("allocation still 100", router._total() == 100, str(router._total()))
    return result


def run_scenario(name: str, out_dir: Optional[str] = None,
                 rule_paths=None) -> ScenarioResult:
    if name == "scenario1":
        result = run_scenario1(rule_paths=rule_paths)
    elif name == "scenario2":
        result = run_scenario2(rule_paths=rule_paths)
    else:
        raise ValueError(f"unknown scenario {name!r}; pick from {SCENARIO_NAMES}")
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{name}.events.jsonl").write_text(result.events_jsonl(),
                                                  encoding="utf-8")
        (out / f"{name}.transcript.txt").write_text(result.human_transcript(),
                                                    encoding="utf-8")
    return result
