import sys
from pathlib import Path

import pytest

from apsems.core_types import system_from_dict
from apsems.fixtures import system_dict

TESTS = Path(__file__).resolve().parent
ROOT = TESTS.parent
DATA = ROOT / "data"

sys.path.insert(0, str(TESTS))


@pytest.fixture
def data_dir() -> Path:
    return DATA


@pytest.fixture
def small_system():
    return system_from_dict(system_dict(n_g=2, k_steps=3))


@pytest.fixture
def system_doc():
    return system_dict(n_g=2, k_steps=3)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_log():
    """Record one PASS/FAIL line per acceptance criterion (echoed in the summary)."""
    def log(number: int, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
    return log


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
