import pytest
from hypothesis import HealthCheck, settings

from articnav.scenario import default_scenarios

settings.register_profile("articnav", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("articnav")


@pytest.fixture(scope="session")
def family():
    return default_scenarios()


@pytest.fixture(scope="session")
def s16(family):
    return family["roundabout_16m"]


@pytest.fixture
def criterion(request, capsys):
    """Report one acceptance criterion: prints a PASS/FAIL line, keeps it for the summary, then asserts."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def report(number: int, ok: bool, detail: str):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line
    return report


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
