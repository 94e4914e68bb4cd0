from __future__ import annotations

import math

import pytest
from hypothesis import HealthCheck, settings

from greenpot.geometry import Circle, Disk, discretize_boundary

settings.register_profile("repo", deadline=None, derandomize=True, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

RHO = 0.25
LOG4 = math.log(4.0)


@pytest.fixture(scope="session")
def unit_disk():
    return Disk((0.0, 0.0), 1.0)


@pytest.fixture(scope="session")
def ring():
    """Circle of radius 1/4 around the origin, 128 panels."""
    return discretize_boundary(Circle((0.0, 0.0), RHO), 128)
