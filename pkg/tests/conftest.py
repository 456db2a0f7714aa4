import pytest

from omlet import datagen
from omlet.rulebase import parse_model, parse_rules


@pytest.fixture(scope="session")
def chair():
    return datagen.builtin("chair")


@pytest.fixture(scope="session")
def chair_defs(chair):
    return chair[0]


@pytest.fixture(scope="session")
def chair_truth(chair):
    return chair[1]


@pytest.fixture(scope="session")
def cup():
    return datagen.builtin("cup")


@pytest.fixture
def tiny_defs():
    return parse_rules(
        """
category thing
  binary stable
  group fits {
    range a
    range b
    range c
  }
end
"""
    )


@pytest.fixture
def tiny_truth():
    return parse_model(
        """
A (0.1 0.3 0.5 0.9)
B (1 2 3 4)
C (0 0.5 0.6 1)
"""
    )


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    def _report(criterion: str, ok: bool, detail: str) -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
