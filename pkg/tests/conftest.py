from __future__ import annotations

import pytest

from eventflow.synth import SynthConfig, generate, write_corpus

_RESULTS: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and not report.passed):
        state = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        previous = _RESULTS.get(number)
        # a criterion split over several tests passes only if all of them do
        if previous is None or previous[1] == "PASS":
            _RESULTS[number] = (title, state)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        title, state = _RESULTS[number]
        terminalreporter.write_line(f"[{state}] {number:>2}. {title}")


@pytest.fixture(scope="session")
def default_corpus(tmp_path_factory):
    """The default 440-day synthetic corpus on disk."""
    directory = tmp_path_factory.mktemp("default_corpus")
    write_corpus(generate(SynthConfig()), directory)
    return directory


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """A 200-day corpus for quicker end-to-end checks."""
    directory = tmp_path_factory.mktemp("small_corpus")
    write_corpus(generate(SynthConfig(n_days=200, seed=3)), directory)
    return directory
