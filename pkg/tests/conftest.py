import pytest

from maser_receiver.model import default_config

_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def base_config():
    return default_config()


@pytest.fixture
def record_criterion(pytestconfig):
    """Print one PASS/FAIL line for an acceptance criterion and keep it for
    the end-of-run summary."""

    def record(number, title, ok, detail):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        print(line)
        pytestconfig.stash.setdefault(_ACCEPTANCE, []).append((number, line))
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
