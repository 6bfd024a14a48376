import numpy as np
import pytest

from omnimav.params import preset

CRITERIA: dict[int, tuple[bool, str]] = {}


def record(n: int, ok: bool, detail: str) -> None:
    """Store one acceptance verdict, then fail the calling test if it did not pass."""
    CRITERIA[n] = (bool(ok), detail)
    assert ok, f"criterion {n}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def nominal():
    return preset("report-nominal")


@pytest.fixture(scope="session")
def main_vehicle():
    return preset("main-paper")


@pytest.fixture(scope="session")
def type1():
    return preset("report-nominal", "type1", 3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
