import numpy as np
import pytest

from caproute.synth import PlantedSpec, generate_planted

_CRITERIA = []


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion, then assert."""

    def record(number, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {detail}"
        _CRITERIA.append(line)
        print(line)
        assert ok, line

    return record


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def small_planted():
    spec = PlantedSpec(classes=4, n_lower=24, dim=8, per_class_train=12, per_class_test=6, seed=7)
    return generate_planted(spec)
