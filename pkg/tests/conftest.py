import pytest

_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if item.name.startswith('test_criterion_') and report.when == 'call':
        title = (item.function.__doc__ or item.name).strip().splitlines()[0]
        _CRITERIA[item.name] = (title, report.passed)
    elif item.name.startswith('test_criterion_') and report.failed:
        title = (item.function.__doc__ or item.name).strip().splitlines()[0]
        _CRITERIA[item.name] = (title, False)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section('acceptance criteria')
    for name in sorted(_CRITERIA):
        title, passed = _CRITERIA[name]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {title}")
