"""
Empirical observables of a fitted classifier: dual variables c, leave-one-out
margins r, the leverage scalar κ̂, plug-in estimates (θ̂, η̂, γ̂), pairwise
correlations of c-vectors and the stochastic error prediction.
"""

from typing import List, Sequence, Dict, Any

import numpy as np
from scipy import linalg

from src.models import Dataset, ErmSolution, LossSpec, EmpiricalObservables, MixtureModel
from src.services.mixture_model import gaussian_tail
from src.utils.errors import DegenerateObservablesError, InvalidParamsError, SingularSystemError
from src.utils.logging import get_logger

logger = get_logger(__name__)

DENOMINATOR_FLOOR = 1e-8


def compute_observables(data: Dataset, sol: ErmSolution, loss: LossSpec) -> EmpiricalObservables:
    """
    Build the empirical observables of a fitted classifier.

    c_i = −ℓ′(t_i) and r_i = t_i − κ̂·c_i for margins t_i = y_i x_iᵀβ̂, with

        κ̂ = (1/n) Σ q_i / (1 − ℓ″(t_i)·q_i),  q_i = x_iᵀQx_i/n,
        Q = ((1/n)Σ ℓ″(t_i) x_i x_iᵀ + λI)⁻¹

    θ̂ = −cᵀ(r − r̄)/‖r − r̄‖², η̂ = 1ᵀc/n, γ̂ = √p‖c‖/n.

    Args:
        data: Training set the solution was fitted on
        sol: Fitted classifier
        loss: Loss used for the fit

    Returns:
        EmpiricalObservables

    Raises:
        InvalidParamsError: If the solution does not match the dataset or loss
        DegenerateObservablesError: If a κ̂ denominator vanishes or r has zero variance
    """
    n, p = data.n, data.p
    if sol.beta.shape != (p,) or sol.margins.shape != (n,):
        raise InvalidParamsError(
            "solution does not match dataset dimensions",
            data={'p': p, 'n': n, 'beta_len': int(sol.beta.size)}
        )
    if sol.loss_name != loss.name:
        raise InvalidParamsError(
            f"solution was fitted with '{sol.loss_name}', not '{loss.name}'",
            data={'solution_loss': sol.loss_name, 'loss': loss.name}
        )

    margins = sol.margins
    c = -loss.deriv1(margins)
    d2 = loss.deriv2(margins)

    Z = data.signed_features
    hessian = (Z * d2) @ Z.T / n
    hessian[np.diag_indices_from(hessian)] += sol.lam
    try:
        factor = linalg.cho_factor(hessian)
    except linalg.LinAlgError:
        raise SingularSystemError("(1/n)Σℓ″·x xᵀ + λI", data={'loss': loss.name, 'lambda': sol.lam})
    q = np.einsum('ij,ij->j', Z, linalg.cho_solve(factor, Z)) / n

    denominators = 1.0 - d2 * q
    bad = np.flatnonzero(denominators < DENOMINATOR_FLOOR)
    if bad.size:
        raise DegenerateObservablesError(
            f"{bad.size} leverage denominators below {DENOMINATOR_FLOOR:g}",
            data={'first_index': int(bad[0]), 'min_denominator': float(denominators.min())}
        )
    kappa_hat = float(np.mean(q / denominators))

    r = margins - kappa_hat * c
    centered = r - r.mean()
    spread = float(centered @ centered)
    if spread <= 0.0 or not np.isfinite(spread):
        raise DegenerateObservablesError("r has zero variance; theta_hat undefined")

    theta_hat = float(-(c @ centered) / spread)
    eta_hat = float(c.mean())
    gamma_hat = float(np.sqrt(p) * np.linalg.norm(c) / n)

    return EmpiricalObservables(
        c=c,
        r=r,
        margins=margins,
        kappa_hat=kappa_hat,
        theta_hat=theta_hat,
        eta_hat=eta_hat,
        gamma_hat=gamma_hat,
        lam=sol.lam,
        loss_name=loss.name,
        p=p,
    )


def resolvent_terms(model: MixtureModel, lam: float, theta: float) -> Dict[str, float]:
    """
    Spectral functionals of R = (λI + θC)⁻¹.

    Returns:
        mu_R_mu = μᵀRμ, mu_RCR_mu = μᵀRCRμ, trace_RC2 = tr[(RC)²]

    Raises:
        SingularSystemError: If λ + θ·c_j <= 0 for some eigenvalue c_j
    """
    eig = model.cov_eigvals
    diag = lam + theta * eig
    if np.any(diag <= 0):
        raise SingularSystemError(
            "λI + θC is not positive definite",
            data={'lambda': lam, 'theta': theta}
        )
    mu2 = model.mu_eig ** 2
    return {
        'mu_R_mu': float(np.sum(mu2 / diag)),
        'mu_RCR_mu': float(np.sum(mu2 * eig / diag ** 2)),
        'trace_RC2': float(np.sum((eig / diag) ** 2)),
    }


def stochastic_error_prediction(obs: EmpiricalObservables, model: MixtureModel, lam: float) -> float:
    """
    Plug (θ̂, η̂, γ̂) into the error formula Q(m̂/σ̂) with

        m̂  = η̂·μᵀ(λI+θ̂C)⁻¹μ
        σ̂² = η̂²·μᵀ(λI+θ̂C)⁻¹C(λI+θ̂C)⁻¹μ + γ̂²·tr[((λI+θ̂C)⁻¹C)²]/p

    Raises:
        DegenerateObservablesError: If θ̂ <= 0
        SingularSystemError: If the resolvent is not SPD
    """
    if not obs.theta_hat > 0:
        raise DegenerateObservablesError(
            "theta_hat must be positive for the stochastic prediction",
            data={'theta_hat': obs.theta_hat}
        )
    terms = resolvent_terms(model, lam, obs.theta_hat)
    m = obs.eta_hat * terms['mu_R_mu']
    var = obs.eta_hat ** 2 * terms['mu_RCR_mu'] + obs.gamma_hat ** 2 * terms['trace_RC2'] / model.p
    return float(gaussian_tail(m / np.sqrt(var)))


def cross_correlation(obs_list: Sequence[EmpiricalObservables]) -> np.ndarray:
    """
    Pairwise correlations ρ_ij = c_iᵀc_j/(‖c_i‖‖c_j‖).

    Raises:
        InvalidParamsError: If the observables have different sample counts
    """
    sizes = {obs.n for obs in obs_list}
    if len(sizes) != 1:
        raise InvalidParamsError(
            "all observables must come from the same dataset",
            data={'sample_counts': sorted(sizes)}
        )
    C = np.column_stack([obs.c for obs in obs_list])
    norms = np.linalg.norm(C, axis=0)
    if np.any(norms == 0):
        raise DegenerateObservablesError("a c-vector is identically zero")
    rho = (C.T @ C) / np.outer(norms, norms)
    rho = np.clip((rho + rho.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(rho, 1.0)
    return rho


def loo_error_estimate(obs: EmpiricalObservables) -> float:
    """Fraction of negative leave-one-out margins r_i."""
    return float(np.mean(obs.r < 0))


def observables_row(obs: EmpiricalObservables, predicted: float) -> Dict[str, Any]:
    """One CSV row per classifier."""
    return {
        'source': 'empirical',
        'loss': obs.loss_name,
        'lambda': obs.lam,
        'theta': obs.theta_hat,
        'eta': obs.eta_hat,
        'gamma': obs.gamma_hat,
        'kappa': obs.kappa_hat,
        'predicted_error': predicted,
    }
