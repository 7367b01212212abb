"""
Theory tool for the MCP server.
Evaluates deterministic predictions for a mixture described by patterns.
"""

import time
from typing import Dict, Any, Optional

from src.experiments.config import build_model
from src.services.losses import builtin_loss
from src.services.theory_engine import (
    solve_fixed_point,
    predicted_error,
    bias_fixed_lower_bound,
    lower_bound_exponent,
    calibrate_lambda_for_bias,
    bias_ratio_range
)
from src.utils.errors import ErmError, InternalError, InvalidParamsError
from src.utils.validators import validate_choice, validate_count, validate_nonnegative
from src.utils.logging import get_logger, log_solver_run

logger = get_logger(__name__)

ACTIONS = ["predict", "lower_bound", "calibrate", "bias_range"]


class TheoryTool:
    """
    Deterministic (θ, η, γ) predictions, the bias-fixed lower bound and
    λ calibration for a given bias ratio.
    """

    def __init__(self):
        logger.info("TheoryTool initialized", extra={'actions': ACTIONS})

    def execute(
        self,
        action: str,
        p: int,
        n: int,
        mu: str = "ones:1",
        cov: str = "identity",
        loss: str = "logistic",
        lam: float = 0.0,
        omega: Optional[float] = None
    ) -> Dict[str, Any]:
        """
        Run one theory action.

        Args:
            action: predict, lower_bound, calibrate or bias_range
            p: Dimension
            n: Sample count
            mu: Mean pattern (e.g. "ones:sqrt2")
            cov: Covariance pattern (e.g. "toeplitz:0.1")
            loss: Loss name (predict, calibrate, bias_range)
            lam: Ridge strength (predict)
            omega: Bias ratio λ/θ (lower_bound, calibrate)

        Returns:
            Dictionary with the action's result

        Raises:
            InvalidParamsError: If inputs are invalid
            ErmError: Numerical failures from the theory engine
        """
        action = validate_choice(action, ACTIONS, field="action")
        start = time.perf_counter()
        try:
            model = build_model(validate_count(p, 'p'), mu, cov)
            n = validate_count(n, 'n')

            if action == "predict":
                state = solve_fixed_point(model, builtin_loss(loss), validate_nonnegative(lam, 'lambda'), n)
                result = dict(state.as_dict(), predicted_error=predicted_error(state))

            elif action in ("lower_bound", "calibrate"):
                if omega is None:
                    raise InvalidParamsError(f"omega is required for {action}", data={'field': 'omega'})
                omega = validate_nonnegative(omega, 'omega')
                if action == "lower_bound":
                    result = {
                        'omega': omega,
                        'exponent': lower_bound_exponent(model, n, omega),
                        'error_lower_bound': bias_fixed_lower_bound(model, n, omega),
                    }
                else:
                    calibration = calibrate_lambda_for_bias(model, builtin_loss(loss), n, omega)
                    result = {
                        'loss': calibration.loss_name,
                        'target_omega': calibration.target_omega,
                        'attainable': calibration.attainable,
                        'lambda': calibration.lam,
                        'achieved_omega': calibration.achieved_omega,
                        'omega_range': list(calibration.omega_range),
                    }

            else:
                low, high = bias_ratio_range(model, builtin_loss(loss), n)
                result = {'loss': loss, 'omega_min': low, 'omega_max': high}

        except ErmError as e:
            log_solver_run(logger, f"theory.{action}", (time.perf_counter() - start) * 1000, False,
                           error=e.message)
            raise
        except Exception as e:
            logger.error(f"Theory tool error: {e}", exc_info=True)
            raise InternalError(f"Internal error: {str(e)}")

        log_solver_run(logger, f"theory.{action}", (time.perf_counter() - start) * 1000, True)
        return result


def create_theory_tool() -> TheoryTool:
    """
    Factory function to create theory tool instance.

    Returns:
        TheoryTool instance
    """
    return TheoryTool()
