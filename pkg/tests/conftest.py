import numpy as np
import pytest

from inelastic1d.model import EnvelopeSpec, ModelParams, PotentialSpec

ACCEPTANCE_LINES = []


def record_acceptance(number, name, passed, detail):
    line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def gauss_v():
    return PotentialSpec.gaussian()


@pytest.fixture(scope="session")
def gauss_eta():
    return EnvelopeSpec.gaussian()


@pytest.fixture(scope="session")
def stationary():
    return ModelParams(eps=0.1)


@pytest.fixture(scope="session")
def nonstationary():
    return ModelParams(eps=0.1, r0=1.5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
