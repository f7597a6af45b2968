import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from encounter.geometry import single_shape_scene

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def unit_sphere():
    return single_shape_scene("sphere", dims={"radius": 1.0})


@pytest.fixture
def cube():
    return single_shape_scene("cube", dims={"half_extent": 0.05})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
