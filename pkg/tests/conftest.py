import pytest

from afdstc.network import ModulationFamily, modulation_constants


@pytest.fixture(scope="session")
def bpsk():
    return modulation_constants(ModulationFamily.MPSK, 2)


@pytest.fixture(scope="session")
def qpsk():
    return modulation_constants(ModulationFamily.MPSK, 4)


ACCEPTANCE_LINES = {}


def record_criterion(number, passed, detail):
    ACCEPTANCE_LINES[number] = f"CRITERION {number}: {'PASS' if passed else 'FAIL'} ({detail})"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
