"""Shared pytest hooks.

Acceptance tests run last so that criterion 6 can read the outcomes of the
property suites from the same session. The acceptance verdicts are repeated
in the terminal summary, one line per criterion.
"""

import pytest

PROPERTY_OUTCOMES_KEY = pytest.StashKey[dict]()
ACCEPTANCE_KEY = pytest.StashKey[dict]()
_config = None


def pytest_configure(config):
    config.stash[PROPERTY_OUTCOMES_KEY] = {}
    config.stash[ACCEPTANCE_KEY] = {}


def pytest_collection_modifyitems(config, items):
    items.sort(key=lambda item: item.nodeid.startswith("tests/test_acceptance.py"))


@pytest.hookimpl(tryfirst=True)
def pytest_sessionstart(session):
    global _config
    _config = session.config


def pytest_runtest_logreport(report):
    """Record the outcome of each test by name; a failure in any phase sticks."""
    if _config is None:
        return
    outcomes = _config.stash[PROPERTY_OUTCOMES_KEY]
    name = report.nodeid.split("::")[-1]
    if report.when == "call" or report.outcome != "passed":
        if outcomes.get(name) in (None, "passed"):
            outcomes[name] = report.outcome


@pytest.fixture
def property_outcomes(request):
    return request.config.stash[PROPERTY_OUTCOMES_KEY]


@pytest.fixture
def acceptance_record(request):
    return request.config.stash[ACCEPTANCE_KEY]


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        terminalreporter.write_line(lines[n])
