import math

import numpy as np
import pytest

from brokenray.errors import TraceError
from brokenray.planar import trace_broken_ray

ACCEPTANCE_LINES = []


def random_cone_ray(domain, rng, max_reflections=64, spread=1.45):
    """Trace a broken ray from a random point of E in a random inward direction."""
    while True:
        th = rng.uniform(0.01, 0.99) * domain.alpha
        r = float(domain.h(th))
        start = np.array([r * math.cos(th), r * math.sin(th)])
        psi = th + math.pi + rng.uniform(-spread, spread)
        try:
            return trace_broken_ray(domain, start, (math.cos(psi), math.sin(psi)),
                                    max_reflections=max_reflections)
        except (TraceError, ValueError):
            continue


def line_params(p0, direction):
    """(s, phi) of the line through p0 with the given direction, using the
    library convention direction = (-sin phi, cos phi)."""
    phi = math.atan2(-direction[0], direction[1])
    return float(p0[0] * math.cos(phi) + p0[1] * math.sin(phi)), phi


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
