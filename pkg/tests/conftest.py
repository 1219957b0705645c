import warnings

import numpy as np
import pytest

from hyperhum.fixtures import calibration_system, k1m2_system
from hyperhum.hum import ControllabilityWarning


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def calibration():
    return calibration_system()


@pytest.fixture
def coupled_calibration():
    return calibration_system(s_minus_plus=1.0)


@pytest.fixture
def k1m2():
    return k1m2_system()


@pytest.fixture(autouse=True)
def _quiet_controllability_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ControllabilityWarning)
        yield


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
