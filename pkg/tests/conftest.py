import os

import pytest

# keep the suite single-threaded unless a test asks for workers explicitly
os.environ.setdefault("VOLTERRA_THREADS", "1")


@pytest.fixture
def tmp_out(tmp_path):
    return str(tmp_path / "out")


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[num])
