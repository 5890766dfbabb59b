from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # builders/oracles/gen importable

from quiesce.model import ApplicationConfiguration, load_application

FIXTURES = Path(__file__).parent.parent / "fixtures"


def read_fixture(name: str) -> str:
    return (FIXTURES / name).read_text(encoding="utf-8")


@pytest.fixture
def chain_config() -> ApplicationConfiguration:
    return load_application(read_fixture("demo_chain.json"))


@pytest.fixture
def diamond_config() -> ApplicationConfiguration:
    return load_application(read_fixture("diamond_app.json"))


@pytest.fixture
def late_config() -> ApplicationConfiguration:
    return load_application(read_fixture("late_app.json"))
