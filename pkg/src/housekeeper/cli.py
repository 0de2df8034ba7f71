"""Operator entry points: serve the HTTP gateway, replay scenarios, or chat
from the terminal.

The repl is a plain HTTP client.  Without --url it starts its own server
thread first, so the whole stack runs exactly as it would in production.
"""

from __future__ import annotations

import argparse
import json
import sys
import threading
import time
from typing import Optional

import httpx

from .config import Config, ConfigError, load_config
from .runtime import Runtime
from .scenarios import SCENARIO_NAMES, run_scenario


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="housekeeper",
        description="Chat-driven home agent with simulated devices.")
    sub = parser.add_subparsers(dest="command", required=True)

    serve_p = sub.add_parser("serve", help="run the HTTP gateway")
    _config_flags(serve_p)

    run_p = sub.add_parser("run-scenario", help="replay a scripted scenario")
    run_p.add_argument("name", choices=SCENARIO_NAMES)
    run_p.add_argument("--out", default=None,
                       help="directory for events.jsonl + transcript.txt")

    repl_p = sub.add_parser("repl", help="interactive terminal chat")
    _config_flags(repl_p)
    repl_p.add_argument("--url", default=None,
                        help="connect to a running service instead of self-hosting")
    repl_p.add_argument("--name", default=None, help="your name for the session")
    return parser


def _config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="TOML or JSON config file")
    parser.add_argument("--provider", choices=("mock", "live"), default=None)
    parser.add_argument("--scene", default=None, help="scene JSON path")
    parser.add_argument("--port", type=int, default=None)
    parser.add_argument("--tau", type=float, default=None)
    parser.add_argument("--budget", type=int, default=None)


def _resolve_config(args) -> Config:
    config = load_config(args.config) if args.config else Config()
    if getattr(args, "provider", None):
        config.provider = args.provider
    if getattr(args, "scene", None):
        config.scene_path = args.scene
    if getattr(args, "port", None):
        config.port = args.port
    if getattr(args, "tau", None):
        config.tau = args.tau
    if getattr(args, "budget", None):
        config.step_budget = args.budget
    return config


def _serve(config: Config) -> None:
    import uvicorn

    from .service import create_app

    runtime = Runtime(config)
    app = create_app(runtime)
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")


def _start_background_server(config: Config) -> str:
    import uvicorn

    from .service import create_app

    runtime = Runtime(config)
    app = create_app(runtime)
    server = uvicorn.Server(uvicorn.Config(
        app, host=config.host, port=config.port, log_level="error"))
    thread = threading.Thread(target=server.run, daemon=True, name="repl-server")
    thread.start()
    base = f"http://{config.host}:{config.port}"
    deadline = time.monotonic() + 10.0
    while time.monotonic() < deadline:
        try:
            httpx.get(f"{base}/healthz", timeout=1.0)
            return base
        except httpx.HTTPError:
            time.sleep(0.05)
    raise RuntimeError(f"server on {base} never came up")


def render_event(event: dict) -> Optional[str]:
    """One human line per event; None suppresses it (the user's own echo)."""
    kind = event["kind"]
    role = event.get("role") or ""
    text = event.get("text") or ""
    payload = event.get("payload") or {}
    if kind == "message":
        return None if role == "user" else f"housekeeper: {text}"
    if kind == "report":
        return f"housekeeper: {text}"
    if kind == "trace":
        return f"  ({role}) {text}"
    if kind == "cache_hit":
        return f"  [cache hit: {payload.get('summary')!r} score {payload.get('score')}]"
    if kind == "generating":
        return f"  [generating program, attempt {payload.get('attempt')}]"
    if kind == "retry":
        return f"  [retrying: {payload.get('error')}]"
    if kind == "executing":
        return f"  [executing program from {payload.get('source')}]"
    if kind == "fsm":
        states = [s["name"] for s in payload.get("program", {}).get("states", [])]
        return f"  [program states: {' -> '.join(states)}]"
    if kind == "snapshot":
        return f"  [state {payload.get('state')}]"
    if kind == "reporting":
        return "  [composing report]"
    if kind == "error":
        return f"! {text}"
    return f"  [{kind}]"


class HttpChat:
    """Minimal client for the gateway's session API."""

    def __init__(self, base_url: str, client: Optional[httpx.Client] = None):
        self.client = client or httpx.Client(base_url=base_url, timeout=30.0)

    def create_session(self, user_name: str) -> str:
        response = self.client.post("/sessions", json={"user_name": user_name})
        response.raise_for_status()
        return response.json()["id"]

    def post(self, session_id: str, text: str) -> int:
        response = self.client.post(f"/sessions/{session_id}/messages",
                                    json={"text": text})
        response.raise_for_status()
        return response.json()["seq"]

    def poll(self, session_id: str, from_seq: int, timeout: float = 10.0) -> dict:
        response = self.client.get(
            f"/sessions/{session_id}/events",
            params={"from_seq": from_seq, "mode": "poll", "timeout": timeout})
        response.raise_for_status()
        return response.json()


def repl_loop(chat: HttpChat, user_name: str, input_fn=input, echo=print) -> None:
    session_id = chat.create_session(user_name)
    echo(f"session {session_id} as {user_name}; /events shows the last task trace, "
         f"Ctrl-D quits")
    next_seq = 1
    last_task: list = []
    while True:
        try:
            line = input_fn("> ")
        except EOFError:
            echo("")
            return
        line = line.strip()
        if not line:
            continue
        if line == "/events":
            for event in last_task:
                echo(json.dumps(event, ensure_ascii=False))
            continue
        chat.post(session_id, line)
        last_task = []
        while True:
            page = chat.poll(session_id, next_seq, timeout=10.0)
            for event in page["events"]:
                next_seq = event["seq"] + 1
                if event["kind"] != "message" or event.get("role") != "user":
                    last_task.append(event)
                rendered = render_event(event)
                if rendered is not None:
                    echo(rendered)
            if page["session_state"] == "Idle" and page["queued"] == 0 \
                    and not page["events"]:
                break


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "serve":
            _serve(_resolve_config(args))
            return 0
        if args.command == "run-scenario":
            result = run_scenario(args.name, out_dir=args.out)
            for label, passed, detail in result.checks:
                mark = "PASS" if passed else "FAIL"
                suffix = f"  ({detail})" if detail and not passed else ""
                print(f"{mark}  {args.name}: {label}{suffix}")
            return 0 if result.ok else 1
        if args.command == "repl":
            config = _resolve_config(args)
            base = args.url or _start_background_server(config)
            repl_loop(HttpChat(base), args.name or config.user_name)
            return 0
    except (ConfigError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
