"""
Error classes and error response formatting.
Every failure raised by the library carries a JSON-RPC 2.0 style code,
a data payload and the process exit code the CLI maps it to.
"""

from typing import Dict, Any, Optional, List
from datetime import datetime, timezone


class ErmError(Exception):
    """
    Base class for all library errors.
    Follows JSON-RPC 2.0 error response format.
    """

    # JSON-RPC 2.0 standard error codes
    INVALID_PARAMS = -32602
    INTERNAL_ERROR = -32603

    # Library error codes (start at -32000)
    CONFIGURATION_ERROR = -32000
    INVALID_MODEL = -32001
    UNKNOWN_LOSS = -32002
    ILL_POSED = -32010
    SINGULAR_SYSTEM = -32011
    CONVERGENCE_FAILURE = -32012
    DEGENERATE_OBSERVABLES = -32013
    INFEASIBLE_COMBINATION = -32014
    COLLINEAR_CLASSIFIERS = -32015
    MIXED_BIAS = -32016
    VACUOUS_BOUND = -32017
    NON_MONOTONE_CALIBRATION = -32018

    # CLI exit codes
    EXIT_CONFIG = 2
    EXIT_NUMERICAL = 3

    exit_code = EXIT_NUMERICAL

    def __init__(
        self,
        code: int,
        message: str,
        data: Optional[Dict[str, Any]] = None
    ):
        """
        Initialize error.

        Args:
            code: JSON-RPC error code
            message: Human-readable error message
            data: Optional additional error details
        """
        self.code = code
        self.message = message
        self.data = data or {}
        self.data['timestamp'] = datetime.now(timezone.utc).isoformat()
        super().__init__(message)

    def to_dict(self, request_id: Optional[str] = None) -> Dict[str, Any]:
        """
        Convert error to JSON-RPC 2.0 error response format.

        Args:
            request_id: Request ID from original request

        Returns:
            Dictionary formatted per JSON-RPC 2.0
        """
        return {
            "jsonrpc": "2.0",
            "error": {
                "code": self.code,
                "message": self.message,
                "data": self.data
            },
            "id": request_id
        }


class InvalidParamsError(ErmError):
    """Invalid arguments passed to an operation."""

    exit_code = ErmError.EXIT_CONFIG

    def __init__(self, message: str = "Invalid parameters", data: Optional[Dict] = None):
        super().__init__(ErmError.INVALID_PARAMS, message, data)


class InternalError(ErmError):
    """Unexpected failure wrapped at a tool boundary."""

    def __init__(self, message: str = "Internal error", data: Optional[Dict] = None):
        super().__init__(ErmError.INTERNAL_ERROR, message, data)


class ConfigurationError(ErmError):
    """Raised when environment or experiment configuration is missing or invalid."""

    exit_code = ErmError.EXIT_CONFIG

    def __init__(self, message: str, errors: Optional[List[Dict]] = None, data: Optional[Dict] = None):
        data = data or {}
        if errors:
            data['validation_errors'] = errors
        super().__init__(ErmError.CONFIGURATION_ERROR, message, data)


# Model and loss errors

class InvalidModelError(ErmError):
    """Mixture parameters violate the model invariants."""

    exit_code = ErmError.EXIT_CONFIG

    def __init__(self, reason: str, data: Optional[Dict] = None):
        message = f"Invalid mixture model: {reason}"
        data = data or {}
        data['reason'] = reason
        super().__init__(ErmError.INVALID_MODEL, message, data)


class UnknownLossError(ErmError):
    """Loss name is not one of the built-in losses."""

    exit_code = ErmError.EXIT_CONFIG

    def __init__(self, name: str, available: List[str], data: Optional[Dict] = None):
        message = f"Unknown loss '{name}'. Available: {', '.join(available)}"
        data = data or {}
        data.update({
            'loss': name,
            'available_losses': available
        })
        super().__init__(ErmError.UNKNOWN_LOSS, message, data)


# Numerical errors

class IllPosedProblemError(ErmError):
    """The ERM problem has no unique bounded minimizer."""

    def __init__(self, reason: str, data: Optional[Dict] = None):
        message = f"Ill-posed problem: {reason}"
        data = data or {}
        data['reason'] = reason
        super().__init__(ErmError.ILL_POSED, message, data)


class SingularSystemError(ErmError):
    """A linear system that must be solved is singular or numerically singular."""

    def __init__(self, system: str, condition: Optional[float] = None, data: Optional[Dict] = None):
        message = f"Singular linear system: {system}"
        data = data or {}
        data['system'] = system
        if condition is not None:
            data['condition_number'] = condition
        super().__init__(ErmError.SINGULAR_SYSTEM, message, data)


class ConvergenceError(ErmError):
    """An iterative solver exhausted its iteration budget."""

    def __init__(
        self,
        solver: str,
        iterations: int,
        residuals: Optional[Dict[str, float]] = None,
        data: Optional[Dict] = None
    ):
        message = f"{solver} did not converge after {iterations} iterations"
        data = data or {}
        data.update({
            'solver': solver,
            'iterations': iterations,
            'last_residuals': residuals or {}
        })
        super().__init__(ErmError.CONVERGENCE_FAILURE, message, data)


class DegenerateObservablesError(ErmError):
    """Empirical observables cannot be formed from the fitted classifier."""

    def __init__(self, reason: str, data: Optional[Dict] = None):
        message = f"Degenerate observables: {reason}"
        data = data or {}
        data['reason'] = reason
        super().__init__(ErmError.DEGENERATE_OBSERVABLES, message, data)


# Combination errors

class InfeasibleCombinationError(ErmError):
    """Weights give a non-positive aggregate 1ᵀv."""

    def __init__(self, total: float, data: Optional[Dict] = None):
        message = f"Infeasible combination weights: 1ᵀv = {total:.3e} must be positive"
        data = data or {}
        data['ones_dot_v'] = total
        super().__init__(ErmError.INFEASIBLE_COMBINATION, message, data)


class CollinearClassifiersError(ErmError):
    """Gram matrix of the c-vectors is singular."""

    def __init__(self, condition: float, data: Optional[Dict] = None):
        message = f"Collinear classifiers: Gram condition number {condition:.3e}"
        data = data or {}
        data['condition_number'] = condition
        super().__init__(ErmError.COLLINEAR_CLASSIFIERS, message, data)


class MixedBiasError(ErmError):
    """Classifiers do not share a common bias ratio λ/θ̂."""

    exit_code = ErmError.EXIT_CONFIG

    def __init__(self, ratios: List[float], data: Optional[Dict] = None):
        message = "Classifiers must all be unregularized or share the same λ/θ̂"
        data = data or {}
        data['bias_ratios'] = ratios
        super().__init__(ErmError.MIXED_BIAS, message, data)


# Theory errors

class VacuousBoundError(ErmError):
    """The bias-fixed lower bound is undefined at the requested ω."""

    def __init__(self, omega: float, bracket: float, data: Optional[Dict] = None):
        message = f"Lower bound is vacuous at omega={omega}: bracket term {bracket:.3e} <= 0"
        data = data or {}
        data.update({
            'omega': omega,
            'bracket_term': bracket
        })
        super().__init__(ErmError.VACUOUS_BOUND, message, data)


class NonMonotoneCalibrationError(ErmError):
    """λ ↦ λ/θ was found non-monotone on the calibration grid."""

    def __init__(self, loss: str, data: Optional[Dict] = None):
        message = f"Bias ratio is not monotone in lambda for loss '{loss}'"
        data = data or {}
        data['loss'] = loss
        super().__init__(ErmError.NON_MONOTONE_CALIBRATION, message, data)


def format_success_response(result: Any, request_id: Optional[str] = None) -> Dict[str, Any]:
    """
    Format successful tool response per JSON-RPC 2.0.

    Args:
        result: Tool execution result
        request_id: Request ID from original request

    Returns:
        Dictionary formatted per JSON-RPC 2.0 spec
    """
    return {
        "jsonrpc": "2.0",
        "result": result,
        "id": request_id
    }
