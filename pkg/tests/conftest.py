import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def smooth_random_field(grid, rng, modes=3, components=None):
    """Random real trigonometric polynomial with wavenumbers up to ``modes`` per axis."""
    shape = grid.dims if components is None else (components,) + grid.dims
    out = np.zeros(shape)
    x = grid.mesh()
    for _ in range(6):
        n = rng.integers(-modes, modes + 1, size=grid.ndim)
        phase = sum(2 * np.pi * ni * xi / L for ni, xi, L in zip(n, x, grid.extents))
        amp = rng.standard_normal(() if components is None else (components,) + (1,) * grid.ndim)
        out = out + amp * np.cos(phase + rng.uniform(0, 2 * np.pi))
    return out


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for num in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[num])
