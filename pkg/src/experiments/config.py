"""
Experiment configuration: TOML files validated into pydantic models, plus
the small pattern language used to describe μ and C.

Mean patterns (all scaled so that entries are O(1/√p)):
    ones[:s]            s·1_p/√p
    block:a,b           [a·1_{p/2}; b·1_{p/2}]/√p
    spike[:a]           a·e₁
    zero                0
    csv:PATH            one value per row

Covariance patterns:
    identity            I_p
    scaled:a            a·I_p
    toeplitz:ρ          C_ij = ρ^|i−j|
    rank1:base,scale    base·I + scale·sym(u vᵀ), u/v from `cov_left`/`cov_right`
    eigen:PATH          rows `eigenvalue,v_1..v_p`
    csv:PATH            raw p×p matrix

Numbers accept a `sqrt` prefix and a sign: `sqrt2`, `-sqrt0.5`.
"""

import csv
import math
import sys
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
from scipy.linalg import toeplitz

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from src.models import MixtureModel, NoiseLaw
from src.services.losses import builtin_loss
from src.utils.errors import ConfigurationError, ErmError
from src.utils.logging import get_logger

logger = get_logger(__name__)


def parse_number(token: str) -> float:
    """Parse `1.5`, `sqrt2`, `-sqrt0.5`."""
    text = token.strip().lower()
    sign = 1.0
    if text.startswith("-"):
        sign, text = -1.0, text[1:]
    elif text.startswith("+"):
        text = text[1:]
    try:
        if text.startswith("sqrt"):
            return sign * math.sqrt(float(text[4:].strip("()")))
        return sign * float(text)
    except ValueError:
        raise ConfigurationError(f"Cannot parse number '{token}'")


def _split(pattern: str):
    kind, _, args = pattern.strip().partition(":")
    return kind.strip().lower(), args.strip()


def _read_matrix(path: str) -> np.ndarray:
    try:
        with open(path, newline="") as fh:
            rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    except (OSError, ValueError) as e:
        raise ConfigurationError(f"Cannot read numeric CSV '{path}': {e}")
    return np.array(rows, dtype=float)


def build_mean(pattern: str, p: int) -> np.ndarray:
    """Evaluate a mean pattern for dimension p."""
    kind, args = _split(pattern)
    values = [parse_number(a) for a in args.split(",")] if args and kind != "csv" else []

    if kind == "ones":
        scale = values[0] if values else 1.0
        return np.full(p, scale / math.sqrt(p))
    if kind == "block":
        if len(values) != 2:
            raise ConfigurationError(f"block pattern needs two values: '{pattern}'")
        half = p // 2
        return np.concatenate([np.full(half, values[0]), np.full(p - half, values[1])]) / math.sqrt(p)
    if kind in ("spike", "e1"):
        mu = np.zeros(p)
        mu[0] = values[0] if values else 1.0
        return mu
    if kind == "zero":
        return np.zeros(p)
    if kind == "csv":
        mu = _read_matrix(args).ravel()
        if mu.size != p:
            raise ConfigurationError(f"mean vector in '{args}' has length {mu.size}, expected {p}")
        return mu
    raise ConfigurationError(f"Unknown mean pattern '{pattern}'")


def build_model(
    p: int,
    mu: str,
    cov: str = "identity",
    cov_left: str = "block:0,1",
    cov_right: str = "block:0,1"
) -> MixtureModel:
    """
    Build a MixtureModel from patterns.

    Raises:
        ConfigurationError: If a pattern is malformed or yields an invalid model
    """
    mean = build_mean(mu, p)
    kind, args = _split(cov)
    description = f"mu={mu}; cov={cov}"
    values = [parse_number(a) for a in args.split(",")] if args and kind not in ("csv", "eigen") else []

    try:
        if kind == "identity":
            return MixtureModel.isotropic(mean, 1.0, description=description)
        if kind == "scaled":
            return MixtureModel.isotropic(mean, values[0] if values else 1.0, description=description)
        if kind == "toeplitz":
            rho = values[0]
            return MixtureModel.from_covariance(mean, toeplitz(rho ** np.arange(p)),
                                                description=description)
        if kind == "rank1":
            if len(values) != 2:
                raise ConfigurationError(f"rank1 pattern needs base and scale: '{cov}'")
            base, scale = values
            u, v = build_mean(cov_left, p), build_mean(cov_right, p)
            perturbation = scale * np.outer(u, v)
            C = base * np.eye(p) + (perturbation + perturbation.T) / 2.0
            if not np.allclose(perturbation, perturbation.T):
                description += " (rank-one term symmetrized)"
            return MixtureModel.from_covariance(mean, C, description=f"{description}; u={cov_left}; v={cov_right}")
        if kind == "eigen":
            table = _read_matrix(args)
            if table.shape != (p, p + 1):
                raise ConfigurationError(f"eigenpair table '{args}' must be p×(p+1)")
            eigvals, eigvecs = table[:, 0], table[:, 1:].T
            return MixtureModel(mu=mean, cov_eigvecs=eigvecs, cov_eigvals_sqrt=np.sqrt(eigvals),
                                description=description)
        if kind == "csv":
            return MixtureModel.from_covariance(mean, _read_matrix(args), description=description)
    except ConfigurationError:
        raise
    except (ErmError, IndexError, ValueError) as e:
        raise ConfigurationError(f"Invalid model for cov='{cov}': {e}")
    raise ConfigurationError(f"Unknown covariance pattern '{cov}'")


class OutputSpec(BaseModel):
    """Where an experiment writes its artifacts."""

    csv: Optional[str] = None
    plot: Optional[str] = None
    histogram_bins: int = Field(default=50, ge=2)


class ExperimentConfig(BaseModel):
    """Validated experiment description."""

    name: str = "experiment"
    p: int = Field(ge=1)
    mu: str = "ones:1"
    cov: str = "identity"
    cov_left: str = "block:0,1"
    cov_right: str = "block:0,1"
    noise: str = "gaussian"
    losses: List[str] = Field(min_length=1)
    lambdas: List[float] = Field(default_factory=lambda: [0.0], min_length=1)
    n_values: Optional[List[int]] = None
    n_over_p: Optional[List[float]] = None
    replications: int = Field(default=1, ge=1)
    base_seed: int = Field(default=0, ge=0)
    theory: bool = True
    record_timing: bool = False
    outputs: OutputSpec = Field(default_factory=OutputSpec)

    @field_validator("losses")
    @classmethod
    def _known_losses(cls, names: List[str]) -> List[str]:
        return [builtin_loss(name).name for name in names]

    @field_validator("noise")
    @classmethod
    def _known_noise(cls, tag: str) -> str:
        return NoiseLaw.parse(tag).value

    @field_validator("lambdas")
    @classmethod
    def _nonnegative_lambdas(cls, grid: List[float]) -> List[float]:
        if any(not math.isfinite(v) or v < 0 for v in grid):
            raise ValueError("lambdas must be finite and nonnegative")
        return grid

    @model_validator(mode="after")
    def _sample_grid(self) -> "ExperimentConfig":
        if not self.n_values and not self.n_over_p:
            raise ValueError("one of n_values or n_over_p must be a nonempty list")
        if self.n_values and any(n < 1 for n in self.n_values):
            raise ValueError("n_values must be positive")
        if self.n_over_p and any(r <= 0 for r in self.n_over_p):
            raise ValueError("n_over_p must be positive")
        return self

    @property
    def sample_sizes(self) -> List[int]:
        if self.n_values:
            return list(self.n_values)
        return [int(round(ratio * self.p)) for ratio in self.n_over_p]

    @property
    def noise_law(self) -> NoiseLaw:
        return NoiseLaw.parse(self.noise)

    def build_model(self) -> MixtureModel:
        return build_model(self.p, self.mu, self.cov, self.cov_left, self.cov_right)


def _validate(raw: dict, source: str) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        errors = [{'loc': list(err['loc']), 'msg': err['msg']} for err in e.errors()]
        raise ConfigurationError(f"Invalid experiment config {source}", errors=errors)
    except ErmError as e:
        raise ConfigurationError(f"Invalid experiment config {source}: {e.message}")


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Validate an in-memory configuration."""
    return _validate(raw, raw.get("name", "<dict>"))


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Load and validate a TOML experiment file.

    Raises:
        ConfigurationError: If the file is missing, not TOML, or invalid
    """
    path = Path(path)
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except OSError as e:
        raise ConfigurationError(f"Cannot read config '{path}': {e}")
    except tomllib.TOMLDecodeError as e:
        raise ConfigurationError(f"Config '{path}' is not valid TOML: {e}")

    config = _validate(raw, f"'{path}'")
    logger.info(f"Loaded experiment '{config.name}' from {path}", extra={'config_path': str(path)})
    return config
