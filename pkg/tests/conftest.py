import pytest

from clozefix.factors import Hypothesis, SourceDocument

OBIT_DOC = (
    '(...) Temperton died in London last week at the age of 66 after "a brief aggressive battle with cancer", '
    "Jon Platt of Warner/Chappell music publishing said. (...)"
)
OBIT_HYP = "Templeton Templeton, one of the UK's most famous 66, has died at the age of 74."

_acceptance: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(code, title): exit criterion from the build contract")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    marker = report.user_properties and dict(report.user_properties).get("acceptance")
    if marker:
        code, title = marker
        prev = _acceptance.get(code, (title, "PASS"))[1]
        status = "PASS" if report.passed and prev == "PASS" else "FAIL"
        _acceptance[code] = (title, status)


@pytest.fixture(autouse=True)
def _record_acceptance(request):
    m = request.node.get_closest_marker("acceptance")
    if m:
        request.node.user_properties.append(("acceptance", tuple(m.args)))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for code in sorted(_acceptance, key=lambda c: int(c.lstrip("AC"))):
        title, status = _acceptance[code]
        terminalreporter.write_line(f"{status}  {code}  {title}")


@pytest.fixture
def obit_doc():
    return SourceDocument("t7", OBIT_DOC)


@pytest.fixture
def obit_hyp():
    return Hypothesis("t7-h", "t7", OBIT_HYP)
