import pytest

import jetlagrange.jetgeometry as jetgeometry
from jetlagrange.cli import bundled_models, resolve_model


@pytest.fixture(params=bundled_models())
def bundled(request):
    return resolve_model(request.param)


@pytest.fixture
def without_quarter_in_N(monkeypatch):
    """Mutation fixture: drop the 1/4 in front of the potential term of N."""
    monkeypatch.setattr(jetgeometry, "_N_POTENTIAL_FACTOR", 1.0)
    yield


# -- acceptance summary: one PASS/FAIL line per criterion ------------------------------

_criteria: dict[str, tuple[str, str, str]] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call" or report.failed:
        measured = dict(report.user_properties).get("measured", "")
        outcome = "PASS" if report.passed else "FAIL"
        if name not in _criteria or outcome == "FAIL":
            _criteria[name] = (outcome, name, measured)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_criteria):
        outcome, name, measured = _criteria[key]
        number = int(name.split("_")[2])
        label = name.split("_", 3)[3].replace("_", " ")
        terminalreporter.write_line(f"{outcome}  [{number:2d}] {label:<36s} {measured}")
