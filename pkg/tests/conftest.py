import numpy as np
import pytest

from contrawr.signals import Epoch, generate_synthetic_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_dataset():
    return generate_synthetic_dataset(n_subjects=6, epochs_per_subject=10, C=2, N=1024, fs=100.0, seed=3)


def make_epoch(samples, fs=100.0, subject="S000", label="W"):
    return Epoch(np.asarray(samples, dtype=np.float32), fs, subject, label)


# acceptance reporting: one PASS/FAIL line per criterion in the terminal summary

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n): acceptance criterion number n")
    config.addinivalue_line("markers", "slow: long-running end-to-end experiment")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    props = dict(report.user_properties)
    if "criterion" in props:
        _ACCEPTANCE[props["criterion"]] = (report.outcome == "passed", props.get("detail", ""), props.get("title", ""))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, detail, title = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
