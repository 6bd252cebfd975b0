import pytest


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): numbered acceptance criterion")
    config._criteria = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    props = dict(rep.user_properties)
    item.config._criteria.append((mark.args[0], mark.args[1], rep.passed, rep.duration,
                                  props.get("detail", "")))


def pytest_terminal_summary(terminalreporter, config):
    rows = sorted(getattr(config, "_criteria", []))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, ok, dur, detail in rows:
        terminalreporter.write_line(
            f"criterion {num} {title:<28} {'PASS' if ok else 'FAIL'}  {dur:7.1f} s  {detail}")
