import numpy as np
import pytest

from slagflow.dataset import StageLabel, SyntheticSpec
from slagflow.loading import LoadedSample, Provenance

_acceptance = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" in report.nodeid and report.when == "call":
        _acceptance.append((report.nodeid.split("::")[-1], report.outcome))
    elif "test_acceptance.py" in report.nodeid and report.when == "setup" and report.outcome != "passed":
        _acceptance.append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance:
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}")


@pytest.fixture
def tiny_spec():
    return SyntheticSpec(samples_per_recording=1024, seed=3)


def make_samples(n_per_class, labels=(StageLabel.BEFORE_SLAG, StageLabel.DURING_SLAG), length=32, channels=1, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for label in labels:
        for i in range(n_per_class):
            out.append(LoadedSample(rng.normal(size=(channels, length)), label, Provenance(1, ("y",), i)))
    return out
