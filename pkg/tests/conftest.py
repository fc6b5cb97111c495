import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from plangen.domains import load_builtin  # noqa: E402
from plangen.pddl import parse_problem  # noqa: E402

# Lines recorded by tests/test_acceptance.py, echoed after the run.
ACCEPTANCE_LINES: list[str] = []

LISTING_1 = """(define (problem example_blocksworld_problem)
(:domain blocksworld)
(:objects o1 o2 - block)
(:init (ontable o1) (on o2 o1)
       (clear o2) (handempty))
(:goal (ontable o1) (ontable o2))
)
"""


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def bw():
    return load_builtin("blocksworld")


@pytest.fixture(scope="session")
def lg():
    return load_builtin("logistics")


@pytest.fixture
def listing1(bw):
    return parse_problem(LISTING_1, bw)
