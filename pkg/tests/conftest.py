import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(20231016)


# Acceptance criteria report: tests marked ``acceptance(number, text)`` are
# summarized as one pass/fail line per criterion at the end of the run.
_acceptance = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, text): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        number, text = marker.args
        passed, texts = _acceptance.get(number, (True, []))
        details = [v for k, v in item.user_properties if k == "detail"]
        entry = f"{text} [{', '.join(details)}]" if details else text
        if entry not in texts:
            texts.append(entry)
        _acceptance[number] = (passed and report.passed, texts)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance):
        passed, texts = _acceptance[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {'; '.join(texts)}")
