import pytest

from seatbear.agent import default_agent
from seatbear.chairs import ChairGenParams, generate_chair
from seatbear.sam import SamConfig


@pytest.fixture(scope="session")
def agent():
    return default_agent()


@pytest.fixture(scope="session")
def sam_cfg(agent):
    return SamConfig.default_for(agent)


@pytest.fixture(scope="session")
def standard_chair():
    return generate_chair(ChairGenParams(seed=3, leg_style="four-legs"))


ACCEPTANCE_LINES = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """``criterion(n, ok, detail)`` prints a PASS/FAIL line and keeps it for the run summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE_LINES, [])

    def report(n: int, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
        print(line)
        lines.append(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
