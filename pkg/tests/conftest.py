from __future__ import annotations

import datetime as dt

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from habitlens.hedonic import Technology
from habitlens.panel import HouseholdPanel, PurchaseEvent
from habitlens.synth import GeneratorConfig, generate_rationalisable

settings.register_profile("habitlens", deadline=None, max_examples=60, derandomize=True,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("habitlens")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running checks")


@pytest.fixture
def day0() -> dt.date:
    return dt.date(2021, 1, 1)


@pytest.fixture
def make_event(day0):
    def make(hid: str, offset: int, good: str, units: int, spend: float) -> PurchaseEvent:
        return PurchaseEvent(hid, day0 + dt.timedelta(days=offset), good, units, spend)
    return make


@pytest.fixture
def rational_case():
    return generate_rationalisable(GeneratorConfig(K=6, J=3, J2=1, T=6, seed=11))


@pytest.fixture
def tiny_panel() -> HouseholdPanel:
    X = np.array([[1.0, 0.0], [0.0, 2.0], [1.0, 1.0], [2.0, 0.0]])
    P = np.array([[2.0, 1.0], [1.5, 1.0], [2.0, 1.2], [1.8, 1.1]])
    return HouseholdPanel.from_arrays("hh", X, P, ("a", "b"))


@pytest.fixture
def identity2() -> Technology:
    return Technology.identity(2, "all", goods=("a", "b"))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":").rstrip("ab"))):
            terminalreporter.write_line(line)
