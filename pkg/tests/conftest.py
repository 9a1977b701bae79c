from collections import defaultdict

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

CRITERIA = {
    1: "1D convergence of DtM vs MtD",
    2: "DtM/MtD equivalence for affine maps",
    3: "EQ constant-function constraint",
    4: "airfoil benchmark",
    5: "Burgers benchmark",
    6: "residual estimator",
    7: "unit/property suites",
}
_outcomes: dict = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion checked by the test")


def pytest_runtest_logreport(report):
    n = getattr(report, "criterion", None)
    if n is None:
        return
    if report.when == "call" or report.failed:
        _outcomes[n].append(report.passed)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        rep.criterion = mark.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_outcomes):
        ok = all(_outcomes[n])
        terminalreporter.write_line(f"criterion {n} ({CRITERIA[n]}): {'PASS' if ok else 'FAIL'}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
