from datetime import datetime, timezone

import numpy as np
import pytest

from canopy_light.scenes import (
    BUNDABERG,
    asymmetric_canopy,
    clear_sky_weather,
    measurement_grid,
    synthetic_dataset,
)
from canopy_light.tuner import ParameterPoint

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def location():
    return BUNDABERG


@pytest.fixture(scope="session")
def clear_week():
    return clear_sky_weather(BUNDABERG, datetime(2016, 10, 1, tzinfo=timezone.utc), days=7)


@pytest.fixture(scope="session")
def small_scene():
    """Self-consistent campaign under a light L-shaped canopy, one reading time."""
    weather = clear_sky_weather(days=40)
    times = [weather.times[0] + 86400.0 + 11.0 * 3600.0]
    grid = measurement_grid(np.arange(-3.0, 3.01, 1.0), np.arange(-3.2, 3.21, 0.8))
    truth = ParameterPoint(s_vox=0.2)
    cloud = asymmetric_canopy(n_foliage=3000, n_branch=400)
    return synthetic_dataset("small", cloud, weather, times, grid, truth=truth), truth
