"""
Built-in smooth convex losses, their proximal mapping g_{κ,ℓ} and the
residual map h = (g − t)/κ.

All functions accept scalars or numpy arrays and broadcast.
"""

from typing import Dict, Callable

import numpy as np
from scipy.special import expit, log_expit

from src.models import LossSpec
from src.utils.errors import UnknownLossError, ConvergenceError
from src.utils.validators import validate_positive
from src.utils.logging import get_logger

logger = get_logger(__name__)

PROX_TOL = 1e-12
PROX_MAX_ITER = 200


# Logistic: ln(1 + e^{-t})

def _logistic_value(t):
    return -log_expit(t)


def _logistic_deriv1(t):
    return -expit(-t)


def _logistic_deriv2(t):
    s = expit(t)
    return s * (1.0 - s)


# Square: (t - 1)^2 / 2

def _square_value(t):
    return 0.5 * (t - 1.0) ** 2


def _square_deriv1(t):
    return t - 1.0


def _square_deriv2(t):
    return np.ones_like(t, dtype=float)


def _square_prox(t, kappa):
    return (t + kappa) / (1.0 + kappa)


# Exponential: e^{-t}

def _exponential_value(t):
    return np.exp(-t)


def _exponential_deriv1(t):
    return -np.exp(-t)


def _exponential_deriv2(t):
    return np.exp(-t)


# Square root: sqrt((t - 1)^2 + 1)

def _square_root_value(t):
    return np.hypot(t - 1.0, 1.0)


def _square_root_deriv1(t):
    return (t - 1.0) / np.hypot(t - 1.0, 1.0)


def _square_root_deriv2(t):
    return np.hypot(t - 1.0, 1.0) ** -3


_BUILTIN: Dict[str, Callable[[], LossSpec]] = {
    "logistic": lambda: LossSpec(
        name="logistic",
        value=_logistic_value,
        deriv1=_logistic_deriv1,
        deriv2=_logistic_deriv2,
        has_finite_minimizer=False,
    ),
    "square": lambda: LossSpec(
        name="square",
        value=_square_value,
        deriv1=_square_deriv1,
        deriv2=_square_deriv2,
        closed_prox=_square_prox,
    ),
    "exponential": lambda: LossSpec(
        name="exponential",
        value=_exponential_value,
        deriv1=_exponential_deriv1,
        deriv2=_exponential_deriv2,
        has_finite_minimizer=False,
    ),
    "square_root": lambda: LossSpec(
        name="square_root",
        value=_square_root_value,
        deriv1=_square_root_deriv1,
        deriv2=_square_root_deriv2,
    ),
}

LOSS_NAMES = tuple(_BUILTIN)


def builtin_loss(name: str) -> LossSpec:
    """
    Look up a built-in loss by name.

    Args:
        name: One of logistic, square, exponential, square_root
            (`square-root` and `sqrt` are accepted as aliases)

    Returns:
        LossSpec

    Raises:
        UnknownLossError: If the name is not recognized
    """
    key = (name or "").strip().lower().replace("-", "_")
    if key == "sqrt":
        key = "square_root"
    if key not in _BUILTIN:
        raise UnknownLossError(name, list(LOSS_NAMES))
    return _BUILTIN[key]()


def smoothed(name: str, eps: float) -> LossSpec:
    """
    Entry point for ε-smoothed versions of non-smooth losses.

    No non-smooth losses are shipped; smooth built-ins are returned unchanged.

    Raises:
        UnknownLossError: For names that are not built-in smooth losses
    """
    validate_positive(eps, 'eps')
    return builtin_loss(name)


def _bracket(loss: LossSpec, kappa: float, t: np.ndarray):
    """Expand [lo, hi] around t until f(lo) <= 0 <= f(hi) for f(a) = a + κℓ′(a) − t."""
    d0 = kappa * loss.deriv1(t)
    lo = np.where(d0 > 0, t - 1.0, t)
    hi = np.where(d0 > 0, t, t + 1.0)
    step = np.ones_like(t)
    for _ in range(PROX_MAX_ITER):
        f_lo = lo + kappa * loss.deriv1(lo) - t
        f_hi = hi + kappa * loss.deriv1(hi) - t
        bad_lo = ~(f_lo <= 0)
        bad_hi = ~(f_hi >= 0)
        if not (bad_lo.any() or bad_hi.any()):
            return lo, hi
        step = np.where(bad_lo | bad_hi, 2.0 * step, step)
        lo = np.where(bad_lo, lo - step, lo)
        hi = np.where(bad_hi, hi + step, hi)
    raise ConvergenceError(
        f"prox bracket[{loss.name}]", PROX_MAX_ITER,
        data={'reason': 'a + kappa*loss\'(a) is not monotone', 'kappa': kappa}
    )


def prox(loss: LossSpec, kappa: float, t):
    """
    Proximal mapping g_{κ,ℓ}(t): the unique a with a + κℓ′(a) = t.

    Safeguarded Newton from a = t; any step leaving the current bracket,
    or producing a non-finite value, is replaced by bisection.

    Args:
        loss: Loss specification
        kappa: Positive step κ
        t: Scalar or array of points

    Returns:
        g_{κ,ℓ}(t) with |g + κℓ′(g) − t| <= 1e-12·max(1, |t|)

    Raises:
        ConvergenceError: If the root is not reached within 200 iterations
    """
    kappa = validate_positive(kappa, 'kappa')
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))

    if loss.has_closed_prox:
        g = loss.closed_prox(t, kappa)
        return float(g[0]) if scalar else g

    tol = PROX_TOL * np.maximum(1.0, np.abs(t))
    with np.errstate(over='ignore', invalid='ignore'):
        lo, hi = _bracket(loss, kappa, t)
        a = np.clip(t, lo, hi)
        for iteration in range(PROX_MAX_ITER):
            f = a + kappa * loss.deriv1(a) - t
            done = np.abs(f) <= tol
            if done.all():
                break
            lo = np.where(f < 0, a, lo)
            hi = np.where(f > 0, a, hi)
            newton = a - f / (1.0 + kappa * loss.deriv2(a))
            safe = np.isfinite(newton) & (newton > lo) & (newton < hi)
            step = np.where(safe, newton, 0.5 * (lo + hi))
            a = np.where(done, a, step)
        else:
            worst = float(np.max(np.abs(f) / tol))
            raise ConvergenceError(
                f"prox[{loss.name}]", PROX_MAX_ITER,
                residuals={'relative_residual': worst},
                data={'kappa': kappa}
            )

    return float(a[0]) if scalar else a


def h_map(loss: LossSpec, kappa: float, t):
    """
    Residual map h(t) = (g_{κ,ℓ}(t) − t)/κ.

    Evaluated through the equivalent form −ℓ′(g_{κ,ℓ}(t)), which does not
    lose digits when κ is small.
    """
    g = prox(loss, kappa, t)
    h = -loss.deriv1(np.asarray(g, dtype=float))
    return float(h) if np.ndim(h) == 0 else h


def h_derivative(loss: LossSpec, kappa: float, t):
    """h′(t) = −ℓ″(g)/(1 + κℓ″(g)), with g = g_{κ,ℓ}(t)."""
    g = np.asarray(prox(loss, kappa, t), dtype=float)
    d2 = loss.deriv2(g)
    out = -d2 / (1.0 + kappa * d2)
    return float(out) if np.ndim(out) == 0 else out
