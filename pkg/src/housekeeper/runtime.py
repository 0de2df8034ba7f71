"""Wires the whole stack together from a Config.

Scene -> registry (devices + AI modules + util helpers) -> provider ->
pipeline -> cache -> coordinator -> session hub.  The HTTP service and the
CLI both just hold a Runtime.
"""

from __future__ import annotations

from pathlib import Path

from .ai_modules import environment_modules, register_modules
from .config import Config
from .coordinator import Coordinator
from .devices import Scene, environment_devices, load_scene, register_scene
from .executor import Executor, register_util
from .gateway import SessionHub
from .memory import ScriptCache
from .pipeline import Pipeline
from .provider import LiveProvider, MockProvider
from .registry import ApiRegistry

FIXTURES = Path(__file__).parent / "fixtures"
DEFAULT_SCENE = FIXTURES / "scenes" / "demo.json"
DEFAULT_RULES = FIXTURES / "mock_rules.json"

UTIL_MODULE_INFO = {
    "id": "util",
    "capability": "list and record helpers available to scripts",
}


class Runtime:
    def __init__(self, config: Config | None = None, scene: Scene | None = None):
        self.config = config or Config()
        if scene is None:
            scene = load_scene(self.config.scene_path or DEFAULT_SCENE)
        self.scene = scene

        self.registry = ApiRegistry(simulate_latency=self.config.simulate_latency)
        register_scene(self.scene, self.registry)
        register_modules(self.scene, self.registry)
        register_util(self.registry)

        environment = {
            "devices": environment_devices(self.scene),
            "modules": environment_modules() + [dict(UTIL_MODULE_INFO)],
        }

        if self.config.provider == "live":
            self.provider = LiveProvider()
        else:
            paths = self.config.rule_paths or [str(DEFAULT_RULES)]
            self.provider = MockProvider.from_paths(paths)

        self.cache = ScriptCache(self.config.cache_path, tau=self.config.tau)
        self.pipeline = Pipeline(self.provider, self.registry)
        self.executor = Executor(self.registry, step_budget=self.config.step_budget)
        self.hub = SessionHub()
        self.coordinator = Coordinator(
            self.hub, self.provider, self.pipeline, self.cache, self.executor,
            self.registry, environment=environment,
            snapshot_source=self.scene.snapshot,
            max_retries=self.config.max_retries)
        self.hub.set_handler(self.coordinator.handle_user_message)

    def close(self) -> None:
        self.hub.close()

    def __enter__(self) -> "Runtime":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
