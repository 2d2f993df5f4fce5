import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("quick", max_examples=12, deadline=None, suppress_health_check=[HealthCheck.too_slow])

ACCEPTANCE_LINES: list[str] = []


def pytest_addoption(parser):
    parser.addoption("--quick", action="store_true", default=False, help="fewer property examples, CI sizes")


def pytest_configure(config):
    quick = config.getoption("--quick") or os.environ.get("STARK_QUICK") == "1"
    settings.load_profile("quick" if quick else "default")
    config.addinivalue_line("markers", "property: invariant suites (runnable standalone with --quick)")
    config.addinivalue_line("markers", "acceptance: end-to-end criteria checks")


@pytest.fixture
def quick(request) -> bool:
    return bool(request.config.getoption("--quick"))


@pytest.fixture
def verdict(capsys):
    """Print one acceptance line immediately and again in the terminal summary."""

    def emit(line: str) -> None:
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
