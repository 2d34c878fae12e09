import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large])
settings.load_profile("default")


@pytest.fixture(scope="session")
def canonical():
    from ivpolicy import canonical_dgp

    return canonical_dgp()


@pytest.fixture(scope="session")
def canonical_sample(canonical):
    from ivpolicy import sample

    return sample(canonical, 4000, 11)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
