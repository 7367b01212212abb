"""Shared pytest fixtures and markers."""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from src.models import MixtureModel, NoiseLaw
from src.services.losses import builtin_loss
from src.services.mixture_model import sample_dataset


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: Monte Carlo checks at full problem sizes")


def random_spd(rng: np.random.Generator, p: int, floor: float = 0.5) -> np.ndarray:
    A = rng.standard_normal((p, p)) / np.sqrt(p)
    return A @ A.T + floor * np.eye(p)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def isotropic_model():
    p = 40
    return MixtureModel.isotropic(np.full(p, np.sqrt(2.0 / p)))


@pytest.fixture
def toeplitz_model():
    p = 40
    idx = np.arange(p)
    C = 0.3 ** np.abs(idx[:, None] - idx[None, :])
    mu = np.concatenate([np.ones(p // 2), 2.0 * np.ones(p // 2)]) / np.sqrt(p)
    return MixtureModel.from_covariance(mu, C)


@pytest.fixture
def dataset(isotropic_model):
    return sample_dataset(isotropic_model, NoiseLaw.GAUSSIAN, 160, seed=11)


@pytest.fixture(params=["logistic", "square", "exponential", "square_root"])
def loss(request):
    return builtin_loss(request.param)
