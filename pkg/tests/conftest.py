import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from curvlab.ambient import SpaceForm
from curvlab.fixtures import make_ellipsoid, make_geodesic_sphere, make_sphere

settings.register_profile("curvlab", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("curvlab")


@pytest.fixture(scope="session")
def unit_sphere():
    return make_sphere(2, 1.0)


@pytest.fixture(scope="session")
def shrinker2():
    return make_sphere(2, 2.0)


@pytest.fixture(scope="session")
def ellipsoid():
    return make_ellipsoid(1.2, 1.0, 0.9)


@pytest.fixture(scope="session")
def geo_sphere():
    return make_geodesic_sphere(SpaceForm.sphere(3, 1.0), math.pi / 4)


@pytest.fixture(scope="session")
def north():
    return np.array([0.0, 0.0, 1.0])


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" not in nodeid or rep.when != "call" and outcome != "error":
                continue
            name = nodeid.split("::test_criterion_")[1]
            lines.append((name, "PASS" if outcome == "passed" else "FAIL"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for name, status in sorted(set(lines)):
            num, _, label = name.partition("_")
            terminalreporter.write_line(f"criterion {int(num):2d} {status}  {label}")
