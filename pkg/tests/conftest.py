from pathlib import Path

import pytest

from scripts.chain import Address, World
from scripts.opcodes import load_schedule
from scripts.step_06_emit import compile_file

ROOT = Path(__file__).resolve().parent.parent
CORPUS = ROOT / "corpus"
CONTRACT = Address(0xC0)
CALLER = Address(0x1)


@pytest.fixture(scope="session")
def schedule():
    return load_schedule()


@pytest.fixture(scope="session")
def wcet():
    return compile_file(CORPUS / "wcet_lists.mlc")


@pytest.fixture(scope="session")
def trading_contract():
    return compile_file(CORPUS / "trading.mlc")


@pytest.fixture(scope="session")
def market():
    return compile_file(CORPUS / "bemp_market.mlc")


@pytest.fixture
def world():
    return World(CONTRACT)


@pytest.fixture
def in_repo(monkeypatch):
    """Run from the repository root so settings.json and relative paths resolve."""
    monkeypatch.chdir(ROOT)
    return ROOT
