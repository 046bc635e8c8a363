from __future__ import annotations

from pathlib import Path

import pytest

from imagekeeper.expansion import compile_spec
from imagekeeper.model import parse_spec

FIXTURES = Path(__file__).parent / "fixtures"


def fixture_text(name: str) -> str:
    return (FIXTURES / name).read_text(encoding="utf-8")


@pytest.fixture
def mathcomp_text() -> str:
    return fixture_text("mathcomp.yml")


@pytest.fixture
def mathcomp_spec(mathcomp_text):
    return parse_spec(mathcomp_text)


@pytest.fixture
def mathcomp_plan(mathcomp_spec):
    return compile_spec(mathcomp_spec)


@pytest.fixture
def coq_spec():
    return parse_spec(fixture_text("coq.yml"))


@pytest.fixture
def coq_plan(coq_spec):
    return compile_spec(coq_spec)


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("tests.test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in module.RESULTS:
        terminalreporter.write_line(line)
