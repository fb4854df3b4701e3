import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def scenario1_small():
    from fpcbag.simulate import generate, scenario

    return generate(scenario(1, n=60, seed=7))


_CRITERIA: dict[str, str] = {}


@pytest.fixture
def criterion():
    """Record one acceptance line; the summary prints them all at the end."""

    def record(number, passed: bool, detail: str):
        _CRITERIA[str(number)] = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA, key=int):
        terminalreporter.write_line(_CRITERIA[key])
