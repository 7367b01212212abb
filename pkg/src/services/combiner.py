"""
Linear combinations of classifiers fitted on one dataset.

For weights a and v = Σ (a_i/θ̂_i)·c_i, the combination Σ a_i β̂_i behaves
like (ω_bias·I + C)⁻¹(τμ + ω_amp·C^{1/2}u) with τ = 1ᵀv/n and
ω_amp = √p‖v‖/n, so its error is driven by ‖v‖/1ᵀv alone.
"""

from typing import Optional, Sequence, List

import numpy as np

from src.models import EmpiricalObservables, ErmSolution, MixtureModel, CombinationResult, LossSpec
from src.services.mixture_model import gaussian_tail
from src.services.empirical_observables import resolvent_terms
from src.services.theory_engine import calibrate_lambda_for_bias
from src.utils.errors import (
    CollinearClassifiersError,
    InfeasibleCombinationError,
    MixedBiasError,
    InvalidParamsError
)
from src.utils.logging import get_logger

logger = get_logger(__name__)

MAX_GRAM_CONDITION = 1e12
BIAS_RTOL = 0.05


def _aggregate(obs_list: Sequence[EmpiricalObservables], weights) -> np.ndarray:
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (len(obs_list),):
        raise InvalidParamsError(
            f"expected {len(obs_list)} weights",
            data={'field': 'weights', 'shape': list(weights.shape)}
        )
    return sum(a / obs.theta_hat * obs.c for a, obs in zip(weights, obs_list))


def combination_objective(obs_list: Sequence[EmpiricalObservables], weights) -> float:
    """‖v‖/1ᵀv for v = Σ (a_i/θ̂_i)·c_i (infinite when 1ᵀv <= 0)."""
    v = _aggregate(obs_list, weights)
    total = float(v.sum())
    return float(np.linalg.norm(v) / total) if total > 0 else np.inf


def shared_bias_ratio(obs_list: Sequence[EmpiricalObservables], rtol: float = BIAS_RTOL) -> float:
    """
    Common λ/θ̂ of the classifiers (0 when all are unregularized).

    Raises:
        MixedBiasError: If the ratios differ by more than rtol
    """
    ratios = [obs.bias_ratio for obs in obs_list]
    if all(obs.lam == 0.0 for obs in obs_list):
        return 0.0
    if any(obs.lam == 0.0 for obs in obs_list):
        raise MixedBiasError(ratios)
    mean = float(np.mean(ratios))
    if max(abs(r - mean) for r in ratios) > rtol * mean:
        raise MixedBiasError(ratios)
    return mean


def predicted_combination_error(
    obs_list: Sequence[EmpiricalObservables],
    weights,
    model: MixtureModel,
    shared_bias: float
) -> float:
    """
    Predicted error Q(m_ξ/σ_ξ) of Σ a_i β̂_i, with

        m_ξ  = τ·μᵀ(ω_b I + C)⁻¹μ
        σ_ξ² = τ²·μᵀ(ω_b I + C)⁻¹C(ω_b I + C)⁻¹μ + ω_amp²·tr[((ω_b I + C)⁻¹C)²]/p

    Raises:
        InfeasibleCombinationError: If 1ᵀv <= 0
    """
    v = _aggregate(obs_list, weights)
    n = v.size
    total = float(v.sum())
    if total <= 0:
        raise InfeasibleCombinationError(total)
    tau = total / n
    omega_amp = np.sqrt(model.p) * np.linalg.norm(v) / n

    terms = resolvent_terms(model, shared_bias, 1.0)
    m = tau * terms['mu_R_mu']
    var = tau ** 2 * terms['mu_RCR_mu'] + omega_amp ** 2 * terms['trace_RC2'] / model.p
    return float(gaussian_tail(m / np.sqrt(var)))


def optimal_combination(
    obs_list: Sequence[EmpiricalObservables],
    sols: Sequence[ErmSolution],
    model: MixtureModel,
    bias_rtol: float = BIAS_RTOL
) -> CombinationResult:
    """
    Weights minimizing ‖Σ(a_i/θ̂_i)c_i‖ / 1ᵀ(Σ(a_i/θ̂_i)c_i).

    The minimizer projects 1_n onto span{c_i}: b = G⁻¹Kᵀ1 with K = [c_1 … c_M]
    and G = KᵀK, then a_i = θ̂_i·b_i normalized to Σ|a_i| = 1.

    Args:
        obs_list: Observables of each classifier (same dataset)
        sols: Matching fitted classifiers
        model: Mixture parameters for the predicted error
        bias_rtol: Relative tolerance when matching λ_i/θ̂_i

    Returns:
        CombinationResult

    Raises:
        InvalidParamsError: If inputs are empty or mismatched
        MixedBiasError: If classifiers do not share a bias ratio
        CollinearClassifiersError: If the Gram matrix is singular
    """
    if not obs_list or len(obs_list) != len(sols):
        raise InvalidParamsError(
            "need one solution per observables entry",
            data={'observables': len(obs_list), 'solutions': len(sols)}
        )
    if len({obs.n for obs in obs_list}) != 1:
        raise InvalidParamsError("all classifiers must be fitted on the same dataset")
    omega_bias = shared_bias_ratio(obs_list, bias_rtol)

    K = np.column_stack([obs.c for obs in obs_list])
    gram = K.T @ K
    condition = float(np.linalg.cond(gram))
    if not np.isfinite(condition) or condition > MAX_GRAM_CONDITION:
        raise CollinearClassifiersError(condition)
    jitter = 1e-12 * np.trace(gram) / gram.shape[0]
    b = np.linalg.solve(gram + jitter * np.eye(gram.shape[0]), K.T @ np.ones(K.shape[0]))

    weights = np.array([obs.theta_hat for obs in obs_list]) * b
    weights /= np.abs(weights).sum()
    if _aggregate(obs_list, weights).sum() <= 0:
        weights = -weights

    v = _aggregate(obs_list, weights)
    n = v.size
    combined = sum(a * sol.beta for a, sol in zip(weights, sols))
    result = CombinationResult(
        weights=weights,
        tau=float(v.sum() / n),
        omega_amp=float(np.sqrt(model.p) * np.linalg.norm(v) / n),
        omega_bias=omega_bias,
        predicted_error=predicted_combination_error(obs_list, weights, model, omega_bias),
        combined_beta=combined,
        objective=combination_objective(obs_list, weights),
        loss_names=tuple(obs.loss_name for obs in obs_list),
    )
    logger.info(
        f"Optimal combination of {result.label}: predicted error {result.predicted_error:.4f}",
        extra={'weights': weights, 'omega_bias': omega_bias, 'gram_condition': condition}
    )
    return result


def mixing_ratio_weights(obs_list: Sequence[EmpiricalObservables], rho: float) -> np.ndarray:
    """
    Weights of a two-classifier combination at mixing ratio
    ρ = θ̂₁⁻¹η̂₁a₁ / Σ θ̂ᵢ⁻¹η̂ᵢaᵢ (normalized so that Σ θ̂ᵢ⁻¹η̂ᵢaᵢ = 1).
    """
    if len(obs_list) != 2:
        raise InvalidParamsError("mixing ratio is defined for two classifiers",
                                 data={'count': len(obs_list)})
    first, second = obs_list
    return np.array([
        rho * first.theta_hat / first.eta_hat,
        (1.0 - rho) * second.theta_hat / second.eta_hat,
    ])


def matched_bias_lambdas(
    model: MixtureModel,
    losses: Sequence[LossSpec],
    n: int,
    omega: float
) -> List[Optional[float]]:
    """Per-loss λ with λ/θ(λ) = ω (None where ω is not attainable)."""
    lams = []
    for loss in losses:
        result = calibrate_lambda_for_bias(model, loss, n, omega)
        lams.append(result.lam if result.attainable else None)
    return lams
