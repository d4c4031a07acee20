import pytest

from flatlas.accessibility import make_point
from flatlas.geometry import ControlAffineSystem
from flatlas.sysfile import load_system


@pytest.fixture(scope="session")
def ex1():
    return load_system("example1.sys").system()


@pytest.fixture(scope="session")
def ex2():
    return load_system("example2.sys").system()


@pytest.fixture(scope="session")
def ex3():
    return load_system("example3.sys").system()


@pytest.fixture(scope="session")
def non_accessible():
    return ControlAffineSystem.parse(["x1", "x2"], ["u1"], ["0", "x2"], [["1", "0"]], "neg")


@pytest.fixture
def point():
    return make_point


_criteria: dict = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion[" in report.nodeid and report.when == "call":
        n = report.nodeid.rsplit("[", 1)[1].rstrip("]")
        _criteria[int(n)] = (report.outcome, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        outcome, dur = _criteria[n]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {n}: {verdict} ({dur:.2f}s)")
