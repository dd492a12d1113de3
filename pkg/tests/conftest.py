import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fibrepair.dispersion import load_preset
from fibrepair.phasematch import solve_phasematch

settings.register_profile(
    "fibrepair",
    max_examples=30,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("fibrepair")


@pytest.fixture(scope="session")
def pcf_a():
    return load_preset("pcf-a")


@pytest.fixture(scope="session")
def silica():
    return load_preset("silica")


@pytest.fixture(scope="session")
def point705(pcf_a):
    return solve_phasematch(pcf_a, "ssff", 705.0)[0]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = next((m for k, m in sys.modules.items() if k.endswith("test_acceptance")), None)
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
