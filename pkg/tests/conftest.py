import numpy as np
import pytest
from hypothesis import settings

from infotrial.model import Dataset, Hyperparameters

settings.register_profile("repo", max_examples=40, deadline=None)
settings.load_profile("repo")


@pytest.fixture
def hyper():
    return Hyperparameters(3.0, 1.0, 4.0)


def make_dataset(rng, d, n, event_rate=0.6):
    X = rng.uniform(-1, 1, (n, d))
    t = rng.exponential(1.0, n) + 0.01
    e = rng.random(n) < event_rate
    return Dataset(X, t, e)


@pytest.fixture
def two_patient_seed():
    """Univariate cohort of two patients used for the acquisition-shape checks."""
    return Dataset(np.array([[0.3], [-0.2]]), np.array([1.5, 2.0]), np.array([True, False]))
