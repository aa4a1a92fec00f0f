from pathlib import Path

import pytest

from pqrepair.event_log import parse_log
from pqrepair.model import parse_model

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def bhs_system():
    return parse_model((FIXTURES / "models" / "bhs_merge_divert.json").read_text())


@pytest.fixture(scope="session")
def evalnet_system():
    return parse_model((FIXTURES / "models" / "evalnet.json").read_text())


@pytest.fixture(scope="session")
def complete_log():
    return parse_log((FIXTURES / "logs" / "bhs_complete.csv").read_text())


@pytest.fixture(scope="session")
def partial_log():
    return parse_log((FIXTURES / "logs" / "bhs_partial.csv").read_text())
