from __future__ import annotations

import json
import pathlib
import tempfile

import pytest

from housekeeper.ai_modules import register_modules
from housekeeper.devices import build_scene
from housekeeper.devices import register_scene
from housekeeper.executor import register_util
from housekeeper.registry import ApiRegistry
from housekeeper.runtime import FIXTURES

TESTS = pathlib.Path(__file__).parent


def scene1_doc() -> dict:
    return json.loads((FIXTURES / "scenes" / "scenario1.json").read_text())


def scene2_doc() -> dict:
    return json.loads((FIXTURES / "scenes" / "scenario2.json").read_text())


def golden_program(name: str) -> dict:
    return json.loads((FIXTURES / "programs" / f"{name}.json").read_text())


@pytest.fixture
def scene1():
    return build_scene(scene1_doc())


@pytest.fixture
def scene2():
    return build_scene(scene2_doc())


@pytest.fixture
def registry1(scene1):
    """Registry with devices, AI modules and util for the counting scene."""
    registry = ApiRegistry()
    register_scene(scene1, registry)
    register_modules(scene1, registry)
    register_util(registry)
    return registry


@pytest.fixture
def registry2(scene2):
    registry = ApiRegistry()
    register_scene(scene2, registry)
    register_modules(scene2, registry)
    register_util(registry)
    return registry


@pytest.fixture
def tmp_cache_path():
    with tempfile.TemporaryDirectory() as td:
        yield str(pathlib.Path(td) / "cache.jsonl")
