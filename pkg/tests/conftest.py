import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from roughwave.field import WaveFunction, make_grid, norm_of

settings.register_profile(
    "roughwave", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("roughwave")


def random_state(grid, seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=grid.M) + 1j * rng.normal(size=grid.M)
    return WaveFunction(grid, v / norm_of(grid, v))


def smooth_state(grid, seed, band=0.5, centre=0.0, width=None):
    """Random band-limited data under a Gaussian envelope."""
    rng = np.random.default_rng(seed)
    width = width or grid.L / 12
    m = max(1, int(band * grid.T))
    modes = np.arange(-m, m + 1)
    c = rng.normal(size=len(modes)) + 1j * rng.normal(size=len(modes))
    v = (c[None, :] * np.exp(1j * np.outer(grid.x, modes / grid.T))).sum(axis=1)
    v = v * np.exp(-((grid.x - centre) ** 2) / (2 * width**2))
    return WaveFunction(grid, v / norm_of(grid, v))


@pytest.fixture
def grid64():
    return make_grid(64, 1024)


# one line per acceptance criterion, filled in by test_acceptance
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[num])
