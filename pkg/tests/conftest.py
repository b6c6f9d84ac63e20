"""Shared fixtures: the standard synthetic dataset F1 plus service wiring.

The acceptance module gets a per-criterion pass/fail line in the terminal
summary (run with -v or plain; lines print after the test session).
"""

import pytest

from dtbengine import SceneService, DatasetStore, gen_fixture, fixture_f1, write_fixture


@pytest.fixture(scope="session")
def f1():
    """The standard fixture, generated once per test session."""
    return gen_fixture(fixture_f1())


@pytest.fixture(scope="session")
def f1_store_dir(tmp_path_factory):
    """F1 written as a store directory."""
    out = tmp_path_factory.mktemp("stores") / "f1"
    write_fixture(fixture_f1(), out)
    return out


@pytest.fixture(scope="session")
def f1_store(f1):
    return DatasetStore(
        dataset_id="f1",
        atlas=f1.atlas,
        bio=f1.bold_biological,
        dtb=f1.bold_dtb,
        dti=f1.dti,
        manifest=f1.manifest,
    )


@pytest.fixture()
def service(f1_store):
    svc = SceneService()
    svc.add_store(f1_store)
    return svc


_ACCEPTANCE_RESULTS = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance" in report.nodeid:
        _ACCEPTANCE_RESULTS.append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, outcome in _ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}")
