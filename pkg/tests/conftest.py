import re

_CRITERIA: dict[int, tuple[str, str]] = {}
_DETAILS: dict[int, str] = {}


def record_detail(number: int, text: str) -> None:
    _DETAILS[number] = text


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    number = int(m.group(1))
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _CRITERIA[number] = ("PASS" if report.outcome == "passed" else "FAIL", m.group(2).replace("_", " "))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        status, name = _CRITERIA[number]
        detail = _DETAILS.get(number, "")
        terminalreporter.write_line(f"criterion {number:2d} {status}: {name}" + (f" ({detail})" if detail else ""))
