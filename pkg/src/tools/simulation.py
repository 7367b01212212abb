"""
Simulation tool for the MCP server.
Samples a training set, fits classifiers and reports their observables.
"""

import time
from typing import Dict, Any, List, Optional

from src.experiments.config import build_model
from src.models import NoiseLaw
from src.services.losses import builtin_loss
from src.services.mixture_model import sample_dataset, classification_error, oracle_error
from src.services.erm_solver import solve_erm
from src.services.empirical_observables import (
    compute_observables,
    stochastic_error_prediction,
    loo_error_estimate,
    cross_correlation
)
from src.services.combiner import optimal_combination
from src.utils.errors import ErmError, InternalError, InvalidParamsError
from src.utils.validators import validate_choice, validate_count, validate_grid
from src.utils.logging import get_logger, log_solver_run

logger = get_logger(__name__)

ACTIONS = ["fit", "combine"]


class SimulationTool:
    """One-shot simulations: fit classifiers on a sampled dataset, optionally combine them."""

    def __init__(self):
        logger.info("SimulationTool initialized", extra={'actions': ACTIONS})

    def execute(
        self,
        action: str,
        p: int,
        n: int,
        losses: List[str],
        lambdas: Optional[List[float]] = None,
        mu: str = "ones:1",
        cov: str = "identity",
        noise: str = "gaussian",
        seed: int = 0
    ) -> Dict[str, Any]:
        """
        Run one simulation action.

        Args:
            action: fit (every loss at its λ) or combine (optimal combination of the fits)
            p: Dimension
            n: Sample count
            losses: Loss names
            lambdas: One λ per loss (default 0 for all)
            mu: Mean pattern
            cov: Covariance pattern
            noise: Noise law tag
            seed: Sampling seed

        Returns:
            Per-classifier errors and observables, plus the combination for `combine`

        Raises:
            InvalidParamsError: If inputs are invalid
            ErmError: Numerical failures while fitting or combining
        """
        action = validate_choice(action, ACTIONS, field="action")
        if not losses:
            raise InvalidParamsError("losses cannot be empty", data={'field': 'losses'})
        lambdas = validate_grid(lambdas if lambdas is not None else [0.0] * len(losses), 'lambdas')
        if len(lambdas) != len(losses):
            raise InvalidParamsError(
                "need one lambda per loss",
                data={'losses': len(losses), 'lambdas': len(lambdas)}
            )

        start = time.perf_counter()
        try:
            model = build_model(validate_count(p, 'p'), mu, cov)
            data = sample_dataset(model, NoiseLaw.parse(noise), validate_count(n, 'n'), seed)

            specs = [builtin_loss(name) for name in losses]
            sols = [solve_erm(data, loss, lam) for loss, lam in zip(specs, lambdas)]
            obs_list = [compute_observables(data, sol, loss) for sol, loss in zip(sols, specs)]

            classifiers = []
            for sol, obs in zip(sols, obs_list):
                classifiers.append({
                    'loss': sol.loss_name,
                    'lambda': sol.lam,
                    'error': classification_error(sol.beta, model),
                    'stochastic_prediction': stochastic_error_prediction(obs, model, sol.lam),
                    'loo_error': loo_error_estimate(obs),
                    'theta_hat': obs.theta_hat,
                    'eta_hat': obs.eta_hat,
                    'gamma_hat': obs.gamma_hat,
                    'kappa_hat': obs.kappa_hat,
                    'iterations': sol.iterations,
                })
            result = {
                'p': model.p,
                'n': data.n,
                'seed': seed,
                'oracle_error': oracle_error(model),
                'classifiers': classifiers,
            }

            if action == "combine":
                combination = optimal_combination(obs_list, sols, model)
                result['correlation'] = cross_correlation(obs_list).tolist()
                result['combination'] = {
                    'weights': combination.weights.tolist(),
                    'tau': combination.tau,
                    'omega_amp': combination.omega_amp,
                    'omega_bias': combination.omega_bias,
                    'predicted_error': combination.predicted_error,
                    'error': classification_error(combination.combined_beta, model),
                }

        except ErmError as e:
            log_solver_run(logger, f"simulation.{action}", (time.perf_counter() - start) * 1000, False,
                           error=e.message)
            raise
        except Exception as e:
            logger.error(f"Simulation tool error: {e}", exc_info=True)
            raise InternalError(f"Internal error: {str(e)}")

        log_solver_run(logger, f"simulation.{action}", (time.perf_counter() - start) * 1000, True)
        return result


def create_simulation_tool() -> SimulationTool:
    """
    Factory function to create simulation tool instance.

    Returns:
        SimulationTool instance
    """
    return SimulationTool()
