import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

GEOMETRIES = [(1, 0), (1, 1), (1, 2), (2, 0), (2, 1)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
