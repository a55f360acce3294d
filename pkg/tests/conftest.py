"""Shared test configuration.

The acceptance tests register one verdict line per criterion through the
``criterion_recorder`` fixture.  Lines print inline (visible under
``pytest -s``) and are replayed in a terminal-summary section so they
also appear in plain ``pytest -v`` output.
"""

import numpy as np
import pytest

ACCEPTANCE_LINES: list[str] = []


def _record(line: str) -> None:
    print(line)
    ACCEPTANCE_LINES.append(line)


@pytest.fixture(scope="session")
def criterion_recorder():
    return _record


@pytest.hookimpl(trylast=True)
def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(autouse=True)
def _no_global_seed_leak():
    # Library code must never touch numpy's global RNG; freezing the state
    # here makes any hidden np.random usage fail loudly in equality tests.
    state = np.random.get_state()
    yield
    after = np.random.get_state()
    assert state[0] == after[0] and np.array_equal(state[1], after[1]), (
        "global numpy RNG state changed during a test; library code must "
        "use its own streams"
    )
