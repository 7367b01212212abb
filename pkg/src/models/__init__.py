"""
Domain types for the mixture-classification toolkit.
All types are immutable after construction; array fields are stored read-only.
"""

from dataclasses import dataclass, field, fields, asdict
from enum import Enum
from typing import Callable, Optional, Tuple, List, Dict, Any

import numpy as np

from src.utils.errors import InvalidModelError, InvalidParamsError
from src.utils.validators import validate_finite_array, validate_labels


def _frozen(array, dtype=float) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class MixtureModel:
    """
    Two-class mixture x = y·μ + V·Λ·z with y uniform on {±1}.

    The covariance C = V·Λ²·Vᵀ is kept in factored form so sampling and
    every trace functional share one eigendecomposition.
    """

    mu: np.ndarray
    cov_eigvecs: np.ndarray
    cov_eigvals_sqrt: np.ndarray
    description: str = ""

    ORTHONORMAL_TOL = 1e-10
    EIGEN_TOL = 1e-10

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        V = np.asarray(self.cov_eigvecs, dtype=float)
        lam = np.asarray(self.cov_eigvals_sqrt, dtype=float)

        if mu.ndim != 1 or mu.size == 0:
            raise InvalidModelError("mu must be a nonempty vector", {'shape': list(mu.shape)})
        p = mu.size
        if V.shape != (p, p) or lam.shape != (p,):
            raise InvalidModelError(
                "eigenvector matrix must be p×p and eigenvalue vector length p",
                {'p': p, 'eigvecs_shape': list(V.shape), 'eigvals_shape': list(lam.shape)}
            )
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(V)) and np.all(np.isfinite(lam))):
            raise InvalidModelError("model parameters contain non-finite entries")
        if np.any(lam <= 0):
            raise InvalidModelError(
                "covariance square-root eigenvalues must be strictly positive",
                {'min_eigval_sqrt': float(lam.min())}
            )
        deviation = np.abs(V.T @ V - np.eye(p)).max()
        if deviation > self.ORTHONORMAL_TOL:
            raise InvalidModelError(
                "eigenvector matrix is not orthonormal",
                {'max_deviation': float(deviation)}
            )

        object.__setattr__(self, 'mu', _frozen(mu))
        object.__setattr__(self, 'cov_eigvecs', _frozen(V))
        object.__setattr__(self, 'cov_eigvals_sqrt', _frozen(lam))

    @classmethod
    def from_covariance(cls, mu, cov, symmetrize: bool = True, description: str = "") -> "MixtureModel":
        """
        Build a model from a raw covariance matrix.

        Args:
            mu: Class-mean vector, length p
            cov: p×p covariance matrix
            symmetrize: Replace cov by (cov + covᵀ)/2 before decomposing
            description: Free-text provenance carried into experiment output

        Returns:
            MixtureModel with C eigendecomposed once

        Raises:
            InvalidModelError: If cov is not finite, not square, or not positive definite
        """
        C = np.asarray(cov, dtype=float)
        mu = np.asarray(mu, dtype=float)
        if C.ndim != 2 or C.shape[0] != C.shape[1] or C.shape[0] != mu.size:
            raise InvalidModelError(
                "covariance must be a square matrix matching len(mu)",
                {'cov_shape': list(C.shape), 'p': int(mu.size)}
            )
        if not np.all(np.isfinite(C)):
            raise InvalidModelError("covariance contains non-finite entries")
        if symmetrize:
            C = (C + C.T) / 2.0
        elif not np.allclose(C, C.T, atol=cls.EIGEN_TOL):
            raise InvalidModelError("covariance is not symmetric")

        eigvals, eigvecs = np.linalg.eigh(C)
        if eigvals[0] <= cls.EIGEN_TOL * max(1.0, abs(eigvals[-1])):
            raise InvalidModelError(
                "covariance is not positive definite",
                {'min_eigenvalue': float(eigvals[0])}
            )
        return cls(mu=mu, cov_eigvecs=eigvecs, cov_eigvals_sqrt=np.sqrt(eigvals),
                   description=description)

    @classmethod
    def isotropic(cls, mu, scale: float = 1.0, description: str = "") -> "MixtureModel":
        """Model with C = scale·I."""
        mu = np.asarray(mu, dtype=float)
        if scale <= 0:
            raise InvalidModelError("isotropic scale must be positive", {'scale': scale})
        return cls(mu=mu, cov_eigvecs=np.eye(mu.size),
                   cov_eigvals_sqrt=np.full(mu.size, np.sqrt(scale)),
                   description=description)

    @property
    def p(self) -> int:
        return self.mu.size

    @property
    def cov_eigvals(self) -> np.ndarray:
        """Eigenvalues of C (diagonal of Λ²)."""
        return self.cov_eigvals_sqrt ** 2

    @property
    def mu_eig(self) -> np.ndarray:
        """μ expressed in the eigenbasis of C."""
        return self.cov_eigvecs.T @ self.mu

    @property
    def covariance(self) -> np.ndarray:
        V = self.cov_eigvecs
        return (V * self.cov_eigvals) @ V.T

    @property
    def sqrt_covariance(self) -> np.ndarray:
        V = self.cov_eigvecs
        return (V * self.cov_eigvals_sqrt) @ V.T

    def inverse_apply(self, v: np.ndarray) -> np.ndarray:
        """Return C⁻¹v through the eigendecomposition."""
        V = self.cov_eigvecs
        return V @ ((V.T @ v) / self.cov_eigvals)

    def __repr__(self):
        return f"<MixtureModel(p={self.p}, |mu|={np.linalg.norm(self.mu):.4g}, '{self.description}')>"


class NoiseLaw(str, Enum):
    """Law of the i.i.d. entries of z (zero mean, unit variance)."""

    GAUSSIAN = "gaussian"
    RADEMACHER = "rademacher"
    UNIFORM = "uniform_unit_variance"

    @classmethod
    def parse(cls, tag: str) -> "NoiseLaw":
        """Parse a law name; `uniform` is accepted as shorthand."""
        tag = (tag or "").strip().lower()
        if tag == "uniform":
            return cls.UNIFORM
        try:
            return cls(tag)
        except ValueError:
            raise InvalidParamsError(
                f"Unknown noise law '{tag}'. Allowed: gaussian, rademacher, uniform",
                data={'field': 'noise', 'value': tag}
            )

    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        if self is NoiseLaw.GAUSSIAN:
            return rng.standard_normal(shape)
        if self is NoiseLaw.RADEMACHER:
            return rng.choice(np.array([-1.0, 1.0]), size=shape)
        # U[-√3, √3] has unit variance
        root3 = np.sqrt(3.0)
        return rng.uniform(-root3, root3, size=shape)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Training set: p×n feature matrix X (one sample per column) and ±1 labels."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = validate_finite_array(self.features, 'features', ndim=2)
        y = validate_labels(self.labels)
        if X.shape[1] != y.size:
            raise InvalidParamsError(
                "features must be p×n and labels length n",
                data={'features_shape': list(X.shape), 'labels_shape': list(y.shape)}
            )
        if y.size < 1:
            raise InvalidParamsError("dataset must contain at least one sample")
        object.__setattr__(self, 'features', _frozen(X))
        object.__setattr__(self, 'labels', _frozen(y))

    @property
    def n(self) -> int:
        return self.labels.size

    @property
    def p(self) -> int:
        return self.features.shape[0]

    @property
    def signed_features(self) -> np.ndarray:
        """X_y: columns y_i·x_i."""
        return self.features * self.labels

    def __repr__(self):
        return f"<Dataset(p={self.p}, n={self.n})>"


@dataclass(frozen=True)
class LossSpec:
    """
    Smooth convex loss with derivatives.

    `closed_prox(t, kappa)` is set when the proximal mapping has a closed form.
    `has_finite_minimizer` is False for strictly decreasing losses, for which
    unregularized ERM on separable data has no solution.
    """

    name: str
    value: Callable[[np.ndarray], np.ndarray]
    deriv1: Callable[[np.ndarray], np.ndarray]
    deriv2: Callable[[np.ndarray], np.ndarray]
    has_finite_minimizer: bool = True
    closed_prox: Optional[Callable[[np.ndarray, float], np.ndarray]] = field(default=None, repr=False)

    @property
    def has_closed_prox(self) -> bool:
        return self.closed_prox is not None

    def __repr__(self):
        return f"<LossSpec(name='{self.name}')>"


@dataclass(frozen=True, eq=False)
class ErmSolution:
    """Fitted weight vector with stationarity diagnostics."""

    beta: np.ndarray
    lam: float
    loss_name: str
    grad_residual: float
    margins: np.ndarray
    iterations: int = 0
    objective: float = float('nan')

    def __post_init__(self):
        object.__setattr__(self, 'beta', _frozen(self.beta))
        object.__setattr__(self, 'margins', _frozen(self.margins))

    def __repr__(self):
        return (f"<ErmSolution(loss='{self.loss_name}', lambda={self.lam:g}, "
                f"|beta|={np.linalg.norm(self.beta):.4g}, residual={self.grad_residual:.2e})>")


@dataclass(frozen=True, eq=False)
class EmpiricalObservables:
    """Per-sample dual variables c, leave-one-out margins r and plug-in estimates."""

    c: np.ndarray
    r: np.ndarray
    margins: np.ndarray
    kappa_hat: float
    theta_hat: float
    eta_hat: float
    gamma_hat: float
    lam: float
    loss_name: str
    p: int

    def __post_init__(self):
        for name in ('c', 'r', 'margins'):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def bias_ratio(self) -> float:
        """λ/θ̂."""
        return self.lam / self.theta_hat

    def __repr__(self):
        return (f"<EmpiricalObservables(loss='{self.loss_name}', lambda={self.lam:g}, "
                f"theta={self.theta_hat:.4g}, eta={self.eta_hat:.4g}, gamma={self.gamma_hat:.4g}, "
                f"kappa={self.kappa_hat:.4g})>")


@dataclass(frozen=True)
class TheoryState:
    """Solution of the deterministic fixed-point system and the implied law r ~ N(m, σ²)."""

    theta: float
    eta: float
    gamma: float
    kappa: float
    m: float
    sigma: float
    lam: float
    loss_name: str
    n: int
    p: int
    converged: bool = True
    iterations: int = 0
    residual: float = 0.0

    @property
    def bias_ratio(self) -> float:
        return self.lam / self.theta

    def as_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class CalibrationResult:
    """Outcome of searching λ such that λ/θ(λ) hits a target bias ratio."""

    target_omega: float
    attainable: bool
    lam: Optional[float]
    achieved_omega: Optional[float]
    omega_range: Tuple[float, float]
    loss_name: str


@dataclass(frozen=True, eq=False)
class CombinationResult:
    """Weights of a linear combination of classifiers and its predicted error."""

    weights: np.ndarray
    tau: float
    omega_amp: float
    omega_bias: float
    predicted_error: float
    combined_beta: np.ndarray
    objective: float
    loss_names: Tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'weights', _frozen(self.weights))
        object.__setattr__(self, 'combined_beta', _frozen(self.combined_beta))

    @property
    def label(self) -> str:
        return "+".join(self.loss_names)


@dataclass(frozen=True)
class TrialRecord:
    """One CSV row of an experiment run."""

    trial: int
    seed: int
    loss: str
    lam: float
    n: int
    p: int
    err_emp: Optional[float] = None
    err_stoch: Optional[float] = None
    err_theory: Optional[float] = None
    theta_hat: Optional[float] = None
    eta_hat: Optional[float] = None
    gamma_hat: Optional[float] = None
    kappa_hat: Optional[float] = None
    theta: Optional[float] = None
    eta: Optional[float] = None
    gamma: Optional[float] = None
    kappa: Optional[float] = None
    status: str = "ok"
    ms: float = 0.0

    CSV_COLUMNS = ("trial", "seed", "loss", "lambda", "n", "p", "err_emp", "err_stoch",
                   "err_theory", "theta_hat", "eta_hat", "gamma_hat", "kappa_hat",
                   "theta", "eta", "gamma", "kappa", "status", "ms")

    def as_row(self) -> List[Any]:
        values = [getattr(self, f.name) for f in fields(self)]
        return values


__all__ = [
    "MixtureModel",
    "NoiseLaw",
    "Dataset",
    "LossSpec",
    "ErmSolution",
    "EmpiricalObservables",
    "TheoryState",
    "CalibrationResult",
    "CombinationResult",
    "TrialRecord",
]
