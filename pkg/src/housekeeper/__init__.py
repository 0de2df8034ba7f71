"""Housekeeper: a chat agent that turns natural-language chores into small
state-machine programs and runs them against simulated home devices."""

from .config import Config, ConfigError, load_config
from .coordinator import Coordinator, PROBE_TEXT, SUMMARY_REQUEST_TEXT
from .executor import ExecutionReport, Executor
from .gateway import SessionHub
from .memory import ScriptCache, ShortTermMemory
from .pipeline import Pipeline, PipelineError
from .program import FsmProgram, from_json_dict
from .provider import MockProvider, ProviderError
from .registry import ApiError, ApiRegistry
from .runtime import Runtime

__version__ = "0.1.0"

__all__ = [
    "ApiError",
    "ApiRegistry",
    "Config",
    "ConfigError",
    "Coordinator",
    "ExecutionReport",
    "Executor",
    "MockProvider",
    "FsmProgram",
    "PROBE_TEXT",
    "Pipeline",
    "PipelineError",
    "ProviderError",
    "Runtime",
    "ScriptCache",
    "SessionHub",
    "ShortTermMemory",
    "SUMMARY_REQUEST_TEXT",
    "from_json_dict",
    "load_config",
    "__version__",
]
