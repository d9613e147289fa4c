import pytest

_RESULTS = {}


@pytest.fixture
def criterion(request):
    """Register the acceptance criterion a test checks; outcome recorded after the call."""
    def register(number, label):
        request.node._criterion = (number, label)
    return register


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    crit = getattr(item, "_criterion", None)
    if crit is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        _RESULTS[crit] = rep.passed


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for (number, label), ok in sorted(_RESULTS.items()):
        terminalreporter.write_line(f"ACCEPTANCE {number:>2} {'PASS' if ok else 'FAIL'}  {label}")
