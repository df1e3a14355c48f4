import pytest

from conewalk.automaton import build_classified
from conewalk.oracle import bfs_oracle
from conewalk.walk import DrivingMeasure, pilot_target_type
from conewalk.words import Presentation


@pytest.fixture(scope="session")
def genus2():
    return Presentation.surface(2)


@pytest.fixture(scope="session")
def free2():
    return Presentation.free(2)


@pytest.fixture(scope="session")
def genus2_ball(genus2):
    return bfs_oracle(genus2, 6)


@pytest.fixture(scope="session")
def free2_ball(free2):
    return bfs_oracle(free2, 8)


@pytest.fixture(scope="session")
def genus2_automaton(genus2):
    return build_classified(genus2)


@pytest.fixture(scope="session")
def free2_automaton(free2):
    return build_classified(free2)


@pytest.fixture(scope="session")
def genus2_srw(genus2):
    return DrivingMeasure.simple(genus2)


@pytest.fixture(scope="session")
def free2_srw(free2):
    return DrivingMeasure.simple(free2)


@pytest.fixture(scope="session")
def genus2_target(genus2_automaton, genus2_srw):
    return pilot_target_type(genus2_automaton, genus2_srw)


@pytest.fixture(scope="session")
def free2_target(free2_automaton, free2_srw):
    return pilot_target_type(free2_automaton, free2_srw)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: dict = {}


@pytest.fixture
def criterion():
    def record(number: int, passed: bool, detail: str) -> None:
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
