from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from synthetic import synth_database  # noqa: E402


@pytest.fixture(scope="session")
def big_db():
    """Corpus, model and a synthetic database of at least 10k fragments."""
    corpus, model, db = synth_database(n_songs=300, n_bars=32, seed=0)
    assert len(db) >= 10_000
    return corpus, model, db


@pytest.fixture(scope="session")
def small_db():
    return synth_database(n_songs=40, n_bars=16, seed=3)


# -- acceptance summary --------------------------------------------------------

_ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): an acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    number, title = mark.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _ACCEPTANCE[number] = ("PASS" if report.outcome == "passed" else "FAIL", title)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        verdict, title = _ACCEPTANCE[number]
        terminalreporter.write_line(f"ACCEPTANCE {number:2d} {verdict}  {title}")
