import re
from collections import OrderedDict

_CRITERIA: "OrderedDict[str, list[str]]" = OrderedDict()
_TITLES: dict[str, str] = {}
_AC = re.compile(r"test_ac(\d+)_(\w+?)(\[|$)")


def _criterion(report):
    if "test_acceptance.py" not in report.nodeid:
        return None
    m = _AC.search(report.nodeid.split("::")[-1])
    if not m:
        return None
    key = f"AC{int(m.group(1))}"
    _TITLES.setdefault(key, m.group(2).replace("_", " "))
    return key


def pytest_runtest_logreport(report):
    key = _criterion(report)
    if key is None:
        return
    outcomes = _CRITERIA.setdefault(key, [])
    if report.when == "call" or report.outcome != "passed":
        outcomes.append("skipped" if report.skipped else report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA, key=lambda k: int(k[2:])):
        outcomes = _CRITERIA[key]
        if any(o == "failed" for o in outcomes):
            status = "FAIL"
        elif outcomes and all(o == "skipped" for o in outcomes):
            status = "N/A "
        else:
            status = "PASS"
        terminalreporter.write_line(f"{status} {key:<5} {_TITLES[key]} ({len(outcomes)} checks)")
