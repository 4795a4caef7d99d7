import json
from pathlib import Path

import pytest

from clonefuse.corpus import fixture_outputs_path, fixture_root, ingest_irplag

GOLDEN = Path(__file__).parent / "golden"

_acceptance_lines = []


@pytest.fixture
def report():
    """Record one PASS/FAIL/SKIP line per acceptance criterion for the terminal summary."""
    def _report(number, name, passed, detail=""):
        status = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
        _acceptance_lines.append(f"[{status}] criterion {number}: {name} {detail}".rstrip())
        return passed
    return _report


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def fixture_manifest():
    return ingest_irplag(fixture_root())


@pytest.fixture(scope="session")
def fixture_stdouts():
    with open(fixture_outputs_path(), encoding="utf-8") as fh:
        return json.load(fh)


@pytest.fixture
def golden():
    def _load(name):
        with open(GOLDEN / name, encoding="utf-8") as fh:
            return json.load(fh)
    return _load
