import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

SESSION = {"start": None, "lines": []}


def pytest_sessionstart(session):
    SESSION["start"] = time.perf_counter()


def pytest_collection_modifyitems(items):
    items.sort(key=lambda item: item.get_closest_marker("run_last") is not None)


def pytest_terminal_summary(terminalreporter):
    if SESSION["lines"]:
        terminalreporter.section("acceptance criteria")
        for line in SESSION["lines"]:
            terminalreporter.write_line(line)


@pytest.fixture
def report():
    """Record and print one ``PASS``/``FAIL`` line per acceptance criterion."""
    def emit(label: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {label}: {detail}"
        SESSION["lines"].append(line)
        print(line)
        return ok
    return emit
