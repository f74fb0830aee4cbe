import numpy as np
import pytest
from hypothesis import settings

from twistray import ConformalSurface, LambdaField, PolyField, Scenario

settings.register_profile("twistray", deadline=None, max_examples=25, derandomize=True)
settings.load_profile("twistray")

# Acceptance results collected by tests/test_acceptance.py and printed at the end.
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: s.split("criterion")[1]):
            terminalreporter.write_line(line)


def poly(terms, shape=None):
    return PolyField.from_terms(terms, shape=shape)


@pytest.fixture
def flat():
    return Scenario()


@pytest.fixture
def magnetic():
    return Scenario(lam=LambdaField.constant(0.3))


@pytest.fixture
def thermostat():
    return Scenario(lam=LambdaField.real({1: poly([(0, 0, 0.15 + 0.1j)])}))


@pytest.fixture
def curved_magnetic():
    phi = poly([(1, 0, 0.1), (0, 2, 0.05)])
    lam = LambdaField.real({0: poly([(0, 0, 0.3), (1, 0, 0.1)])})
    return Scenario(surface=ConformalSurface(phi), lam=lam)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
