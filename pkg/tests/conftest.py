"""Suite-wide pytest wiring.

Tests marked @pytest.mark.criterion(n, "title") are the acceptance gate;
after every run a summary section prints one PASS/FAIL line per criterion
so the gate can be read off without grepping the dots.
"""

_CRITERIA: dict[str, tuple[int, str]] = {}  # nodeid -> (number, title)
_RESULTS: dict[int, tuple[str, str]] = {}  # number -> (verdict, title)


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(num, title): acceptance criterion checked by this test"
    )


def pytest_collection_modifyitems(items):
    for item in items:
        marker = item.get_closest_marker("criterion")
        if marker is not None:
            _CRITERIA[item.nodeid] = (marker.args[0], marker.args[1])


def pytest_runtest_logreport(report):
    info = _CRITERIA.get(report.nodeid)
    if info is None:
        return
    num, title = info
    if report.when == "call":
        _RESULTS[num] = ("PASS" if report.passed else "FAIL", title)
    elif report.failed:  # setup or teardown blew up
        _RESULTS[num] = ("FAIL", title)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_RESULTS):
        verdict, title = _RESULTS[num]
        terminalreporter.write_line(f"criterion {num:2d}: {verdict} - {title}")
