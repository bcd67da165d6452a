import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from xbarsim.xbar import AdcConfig, CrossbarConfig

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

DATA = Path(__file__).parent / "data"

# Filled by test_acceptance.py, printed once at the end of the run.
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def ideal_cfg():
    return CrossbarConfig(256, 256, 5.0, 10.0, 0.0, 0.0, AdcConfig(None, 1.0), 0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
