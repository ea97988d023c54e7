import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gfd.models import get_model, sample_data

settings.register_profile(
    "gfd", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("gfd")

# (model id, q, typical theta0) used by parametrized checks
REGULAR = [
    ("location-normal", None, 0.3),
    ("scale-exponential", None, 1.7),
    ("gamma-shape", None, 2.0),
    ("scaled-normal", 1.0, 1.0),
    ("scaled-normal", 0.5, 3.0),
    ("bivnorm-rho", None, 0.5),
]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def draw(model_id, theta0, n, seed, q=None):
    model = get_model(model_id, q)
    return model, sample_data(model, theta0, n, np.random.default_rng(seed))
