from pathlib import Path

import pytest

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture
def scenario_dir() -> Path:
    return SCENARIOS


@pytest.fixture
def listing1_path() -> Path:
    return SCENARIOS / "listing1.scenario"


@pytest.fixture
def ring8_path() -> Path:
    return SCENARIOS / "ring8.scenario"
