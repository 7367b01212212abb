"""
Mixture data model: sampling training sets, the oracle direction and the
exact population classification error of a linear classifier.
"""

import csv
from pathlib import Path
from typing import Union

import numpy as np
from scipy.special import erfc

from src.models import MixtureModel, NoiseLaw, Dataset
from src.utils.errors import InvalidParamsError
from src.utils.validators import validate_count
from src.utils.logging import get_logger

logger = get_logger(__name__)


def gaussian_tail(t):
    """Q(t) = P(N(0,1) > t), computed as erfc(t/√2)/2."""
    return 0.5 * erfc(np.asarray(t, dtype=float) / np.sqrt(2.0))


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator keyed by an integer seed."""
    return np.random.Generator(np.random.Philox(key=int(seed)))


def sample_dataset(
    model: MixtureModel,
    law: Union[NoiseLaw, str],
    n: int,
    seed: int
) -> Dataset:
    """
    Draw n samples x = y·μ + V·Λ·z with y a fair coin on {±1}.

    Args:
        model: Mixture parameters
        law: Law of the entries of z
        n: Number of samples
        seed: Seed of the private generator

    Returns:
        Dataset with features of shape (p, n)
    """
    n = validate_count(n, 'n')
    if not isinstance(law, NoiseLaw):
        law = NoiseLaw.parse(law)

    rng = make_rng(seed)
    y = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    z = law.sample(rng, (model.p, n))
    noise = model.cov_eigvecs @ (model.cov_eigvals_sqrt[:, None] * z)
    X = np.outer(model.mu, y) + noise

    logger.debug(
        f"Sampled {n} samples from {model!r} with {law.value} noise",
        extra={'n': n, 'p': model.p, 'seed': int(seed), 'noise': law.value}
    )
    return Dataset(features=X, labels=y)


def oracle_direction(model: MixtureModel) -> np.ndarray:
    """β* = 2·C⁻¹·μ."""
    return 2.0 * model.inverse_apply(model.mu)


def classification_error(beta, model: MixtureModel) -> float:
    """
    Population misclassification rate of sign(xᵀβ).

    Args:
        beta: Weight vector (any positive rescaling gives the same error)
        model: Mixture parameters

    Returns:
        Q(βᵀμ / √(βᵀCβ))

    Raises:
        InvalidParamsError: If beta is the zero vector or has the wrong length
    """
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (model.p,):
        raise InvalidParamsError(
            f"beta must have length {model.p}",
            data={'field': 'beta', 'shape': list(beta.shape)}
        )
    scale = np.abs(beta).max()
    if not np.isfinite(scale) or scale == 0.0:
        raise InvalidParamsError("beta must be a nonzero finite vector", data={'field': 'beta'})

    # normalizing first makes the result identical for any positive rescaling
    b = model.cov_eigvecs.T @ (beta / scale)
    mean = b @ model.mu_eig
    std = np.sqrt(np.sum(model.cov_eigvals * b * b))
    return float(gaussian_tail(mean / std))


def oracle_error(model: MixtureModel) -> float:
    """Bayes error Q(√(μᵀC⁻¹μ))."""
    snr = float(model.mu_eig @ (model.mu_eig / model.cov_eigvals))
    return float(gaussian_tail(np.sqrt(snr)))


def export_dataset_csv(data: Dataset, path: Union[str, Path]) -> Path:
    """Write a dataset as CSV with header `y,x1..xp`, one row per sample."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["y"] + [f"x{j + 1}" for j in range(data.p)])
        for i in range(data.n):
            writer.writerow([int(data.labels[i])] + [repr(float(v)) for v in data.features[:, i]])
    return path
