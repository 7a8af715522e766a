from functools import lru_cache

import numpy as np
import pytest
from hypothesis import settings

from dyadsim.presets import preset
from dyadsim.sim import run_trial

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@lru_cache(maxsize=None)
def preset_log(name: str):
    """Full-length trial of a preset, simulated once per test session."""
    return run_trial(preset(name))


@lru_cache(maxsize=None)
def preset_summary(name: str):
    from dyadsim.analysis import summarize
    return summarize(preset_log(name))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
