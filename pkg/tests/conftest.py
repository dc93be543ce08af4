import os
import sys
import tempfile

import pytest

from bifrost import kernels

sys.path.insert(0, os.path.dirname(__file__))

from acceptance_log import RESULTS  # noqa: E402


@pytest.fixture(params=sorted(kernels.backends()))
def backend(request):
    """Every importable kernel implementation in turn."""
    return kernels.backends()[request.param]


@pytest.fixture
def store_dir():
    with tempfile.TemporaryDirectory(prefix="bifrost-test-") as d:
        yield d


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
