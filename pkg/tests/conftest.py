import numpy as np
import pytest

from lcanav.dynamics import make_state
from lcanav.trajopt import TrajoptConfig, build_library


@pytest.fixture(scope="session")
def library():
    """Default 5-path library from (0, 0, 0) to (6, 0, 0); shared by all scenarios."""
    return build_library(make_state(0, 0, 0), make_state(6, 0, 0), TrajoptConfig())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config._acceptance_lines = {}


@pytest.fixture
def acceptance(request, capsys):
    """Record one pass/fail line per acceptance criterion and echo it."""

    def report(number, title, passed, detail):
        line = f"CRITERION {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
        request.config._acceptance_lines[number] = line
        with capsys.disabled():
            print("\n" + line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
