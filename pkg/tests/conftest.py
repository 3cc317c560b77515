import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from spinorlab import make_metric

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def flat():
    return make_metric("Flat")


@pytest.fixture
def melvin1():
    # b = 1
    return make_metric("Melvin", B=2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
