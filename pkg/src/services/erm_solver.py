"""
Empirical risk minimization solvers.

    β̂ = argmin_β (1/n) Σ ℓ(y_i x_iᵀβ) + (λ/2)‖β‖²

Damped Newton for any LossSpec, direct solves for least squares and
regularized LDA, and detection of ill-posed unregularized problems.
"""

import csv
import time
from pathlib import Path
from typing import Any, Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

from src.config import config
from src.models import Dataset, LossSpec, ErmSolution
from src.utils.errors import (
    IllPosedProblemError,
    SingularSystemError,
    ConvergenceError,
    InvalidParamsError
)
from src.utils.validators import validate_nonnegative
from src.utils.logging import get_logger, log_solver_run

logger = get_logger(__name__)

ARMIJO_C = 1e-4
MIN_STEP = 1e-12
DIVERGENCE_NORM = 1e6
MAX_CONDITION = 1e12


def objective(data: Dataset, loss: LossSpec, lam: float, beta: np.ndarray) -> float:
    """Regularized empirical risk at beta."""
    return _objective_at(data.signed_features, loss, lam)(beta)[0]


def _objective_at(Z: np.ndarray, loss: LossSpec, lam: float) -> Callable:
    def evaluate(beta: np.ndarray) -> Tuple[float, np.ndarray]:
        margins = Z.T @ beta
        return float(np.mean(loss.value(margins)) + 0.5 * lam * beta @ beta), margins
    return evaluate


def armijo_step(
    evaluate: Callable[[np.ndarray], Tuple[float, Any]],
    beta: np.ndarray,
    value: float,
    direction: np.ndarray,
    slope: float
) -> Optional[Tuple[np.ndarray, float, Any]]:
    """
    Backtracking line search along -direction.

    Halves the step from 1 until the Armijo condition holds. Returns
    (beta, value, extra) at the accepted point, or None when no step down
    to MIN_STEP decreases the objective; beta is then left unchanged.
    """
    if not slope > 0:
        return None
    step = 1.0
    while step >= MIN_STEP:
        candidate = beta - step * direction
        cand_value, extra = evaluate(candidate)
        # rounding slack so steps at machine precision are not rejected
        if cand_value <= value - ARMIJO_C * step * slope + 1e-15 * abs(value):
            return candidate, cand_value, extra
        step *= 0.5
    return None


class ErmSolver:
    """
    Damped Newton solver for smooth convex ERM.

    Hessian (1/n)Σℓ″(t_i)·x_i x_iᵀ + λI, backtracking line search
    (Armijo c=1e-4, halving), gradient step when the Hessian is not
    numerically positive definite.
    """

    def __init__(
        self,
        tol: Optional[float] = None,
        max_iter: Optional[int] = None,
        divergence_norm: float = DIVERGENCE_NORM
    ):
        """
        Initialize solver.

        Args:
            tol: Relative gradient tolerance (default ERM_SOLVER_TOL, 1e-9)
            max_iter: Newton iteration cap (default ERM_SOLVER_MAX_ITER, 500)
            divergence_norm: ‖β‖ beyond which an unregularized fit is declared divergent
        """
        self.tol = tol if tol is not None else (config.ERM_SOLVER_TOL if config else 1e-9)
        self.max_iter = max_iter if max_iter is not None else (config.ERM_SOLVER_MAX_ITER if config else 500)
        self.divergence_norm = divergence_norm

    def solve(
        self,
        data: Dataset,
        loss: LossSpec,
        lam: float,
        beta0: Optional[np.ndarray] = None
    ) -> ErmSolution:
        """
        Minimize the regularized empirical risk.

        Args:
            data: Training set
            loss: Loss specification
            lam: Ridge strength λ >= 0
            beta0: Optional warm start

        Returns:
            ErmSolution with ‖∇‖ <= tol·max(1, ‖(1/n)Xy‖)

        Raises:
            IllPosedProblemError: λ=0 with n <= p, or separable data for a loss
                without finite minimizer, or divergent iterates
            ConvergenceError: Iteration budget exhausted, or no step along the
                Newton or gradient direction decreases the objective
        """
        lam = validate_nonnegative(lam, 'lambda')
        n, p = data.n, data.p
        if lam == 0.0 and n <= p:
            raise IllPosedProblemError(
                "unregularized problem with n <= p has infinitely many solutions",
                data={'n': n, 'p': p, 'loss': loss.name}
            )

        start = time.perf_counter()
        Z = data.signed_features
        threshold = self.tol * max(1.0, float(np.linalg.norm(Z.sum(axis=1) / n)))

        if beta0 is None:
            beta = np.zeros(p)
        else:
            beta = np.array(beta0, dtype=float)
            if beta.shape != (p,):
                raise InvalidParamsError(
                    f"warm start must have length {p}",
                    data={'field': 'beta0', 'shape': list(beta.shape)}
                )

        evaluate = _objective_at(Z, loss, lam)
        value, margins = evaluate(beta)
        grad_norm = np.inf

        for iteration in range(self.max_iter + 1):
            grad = Z @ loss.deriv1(margins) / n + lam * beta
            grad_norm = float(np.linalg.norm(grad))
            if grad_norm <= threshold:
                break
            if iteration == self.max_iter:
                duration_ms = (time.perf_counter() - start) * 1000
                log_solver_run(logger, f"newton[{loss.name}]", duration_ms, False,
                               iteration, grad_norm, "iteration budget exhausted")
                raise ConvergenceError(
                    f"newton[{loss.name}]", iteration,
                    residuals={'grad_norm': grad_norm, 'threshold': threshold},
                    data={'lambda': lam}
                )

            if lam == 0.0:
                self._check_well_posed(loss, beta, margins)

            hessian = (Z * loss.deriv2(margins)) @ Z.T / n
            hessian[np.diag_indices_from(hessian)] += lam
            try:
                direction = linalg.cho_solve(linalg.cho_factor(hessian), grad)
            except linalg.LinAlgError:
                logger.debug(f"Hessian not positive definite at iteration {iteration}; gradient step")
                direction = grad

            accepted = armijo_step(evaluate, beta, value, direction, float(grad @ direction))
            if accepted is None and direction is not grad:
                logger.debug(f"Newton step rejected at iteration {iteration}; gradient step")
                accepted = armijo_step(evaluate, beta, value, grad, grad_norm ** 2)
            if accepted is None:
                duration_ms = (time.perf_counter() - start) * 1000
                log_solver_run(logger, f"newton[{loss.name}]", duration_ms, False,
                               iteration, grad_norm, "line search stalled")
                raise ConvergenceError(
                    f"newton[{loss.name}]", iteration,
                    residuals={'grad_norm': grad_norm, 'threshold': threshold},
                    data={'lambda': lam, 'reason': 'no step decreases the objective'}
                )

            beta, value, margins = accepted

        duration_ms = (time.perf_counter() - start) * 1000
        log_solver_run(logger, f"newton[{loss.name}]", duration_ms, True, iteration, grad_norm)

        return ErmSolution(
            beta=beta,
            lam=lam,
            loss_name=loss.name,
            grad_residual=grad_norm,
            margins=margins,
            iterations=iteration,
            objective=value,
        )

    def _check_well_posed(self, loss: LossSpec, beta: np.ndarray, margins: np.ndarray):
        norm = float(np.linalg.norm(beta))
        if norm > self.divergence_norm:
            raise IllPosedProblemError(
                "iterates diverge; training data is likely linearly separable",
                data={'beta_norm': norm, 'loss': loss.name}
            )
        # all margins positive certifies separability
        if not loss.has_finite_minimizer and margins.min() > 0:
            raise IllPosedProblemError(
                "training data is linearly separable; no unregularized minimizer",
                data={'min_margin': float(margins.min()), 'loss': loss.name}
            )


_default_solver = None


def _solver() -> ErmSolver:
    global _default_solver
    if _default_solver is None:
        _default_solver = ErmSolver()
    return _default_solver


def solve_erm(
    data: Dataset,
    loss: LossSpec,
    lam: float,
    beta0: Optional[np.ndarray] = None
) -> ErmSolution:
    """Solve ERM with the default solver settings. See ErmSolver.solve."""
    return _solver().solve(data, loss, lam, beta0=beta0)


def _factor_spd(A: np.ndarray, lam: float, system: str):
    if lam == 0.0:
        cond = float(np.linalg.cond(A))
        if not np.isfinite(cond) or cond > MAX_CONDITION:
            raise SingularSystemError(system, cond)
    try:
        return linalg.cho_factor(A)
    except linalg.LinAlgError:
        raise SingularSystemError(system)


def solve_least_squares(data: Dataset, lam: float) -> ErmSolution:
    """
    Least squares classifier (λI + XXᵀ/n)⁻¹·Xy/n.

    Raises:
        SingularSystemError: If λ=0 and XXᵀ is not invertible
    """
    lam = validate_nonnegative(lam, 'lambda')
    n, p = data.n, data.p
    if lam == 0.0 and n < p:
        raise SingularSystemError("XXᵀ/n has rank < p", data={'n': n, 'p': p})

    X = data.features
    A = X @ X.T / n
    A[np.diag_indices_from(A)] += lam
    b = X @ data.labels / n
    beta = linalg.cho_solve(_factor_spd(A, lam, "λI + XXᵀ/n"), b)

    margins = data.signed_features.T @ beta
    return ErmSolution(
        beta=beta,
        lam=lam,
        loss_name="square",
        grad_residual=float(np.linalg.norm(A @ beta - b)),
        margins=margins,
        objective=float(0.5 * np.mean((margins - 1.0) ** 2) + 0.5 * lam * beta @ beta),
    )


def solve_lda(data: Dataset, lam: float) -> ErmSolution:
    """
    Regularized LDA 2(λI + Ĉ)⁻¹μ̂ with μ̂ = Xy/n and Ĉ = XXᵀ/n − μ̂μ̂ᵀ.

    Raises:
        SingularSystemError: If λ=0 and Ĉ is not invertible
    """
    lam = validate_nonnegative(lam, 'lambda')
    n, p = data.n, data.p
    X = data.features
    mu_hat = X @ data.labels / n
    if not np.any(mu_hat):
        beta = np.zeros(p)
        return ErmSolution(beta=beta, lam=lam, loss_name="lda", grad_residual=0.0,
                           margins=np.zeros(n))
    if lam == 0.0 and n <= p:
        raise SingularSystemError("sample covariance has rank < p", data={'n': n, 'p': p})

    A = X @ X.T / n - np.outer(mu_hat, mu_hat)
    A[np.diag_indices_from(A)] += lam
    beta = linalg.cho_solve(_factor_spd(A, lam, "λI + Ĉ"), 2.0 * mu_hat)

    return ErmSolution(
        beta=beta,
        lam=lam,
        loss_name="lda",
        grad_residual=float(np.linalg.norm(A @ beta - 2.0 * mu_hat)),
        margins=data.signed_features.T @ beta,
    )


def leave_one_out_margins(
    data: Dataset,
    loss: LossSpec,
    lam: float,
    indices: Sequence[int],
    beta0: Optional[np.ndarray] = None
) -> np.ndarray:
    """
    Refit without each listed sample and return y_i·x_iᵀβ̂₋ᵢ.

    Args:
        data: Training set
        loss: Loss specification
        lam: Ridge strength
        indices: Samples to leave out, one refit each
        beta0: Warm start for every refit (typically the full-data β̂)

    Returns:
        Array of leave-one-out margins aligned with indices
    """
    Z = data.signed_features
    out = np.empty(len(indices))
    for k, i in enumerate(indices):
        keep = np.arange(data.n) != i
        reduced = Dataset(features=data.features[:, keep], labels=data.labels[keep])
        sol = solve_erm(reduced, loss, lam, beta0=beta0)
        out[k] = Z[:, i] @ sol.beta
    return out


def export_solution_csv(sol: ErmSolution, path: Union[str, Path]) -> Path:
    """Write β̂ as CSV with columns `index,beta`."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "beta"])
        for j, value in enumerate(sol.beta):
            writer.writerow([j + 1, repr(float(value))])
    return path
