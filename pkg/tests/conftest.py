import pytest

_RESULTS: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def criterion(request):
    """Record and print a one-line PASS/FAIL verdict for an acceptance criterion."""
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")

    def record(name: str, ok: bool, detail: str = ""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {name}: {detail}"
        _RESULTS[name] = (ok, line)
        if reporter is not None:
            reporter.write_line("")
            reporter.write_line(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    # by criterion number, sub-cases in the order they ran
    for name in sorted(_RESULTS, key=lambda k: int(k.split(".")[0])):
        terminalreporter.write_line(_RESULTS[name][1])
