"""
Deterministic high-dimensional characterization of ridge-regularized ERM.

The fitted classifier behaves like (λI + θC)⁻¹·N(ημ, γ²C/p), where the
scalars (θ, η, γ) solve

    θ = −Cov[h(r), r]/Var[r],   η = E[h(r)],   γ = √((p/n)·E[h(r)²])

with r ~ N(m, σ²),

    m  = η·μᵀ(λI+θC)⁻¹μ
    σ² = η²·μᵀ(λI+θC)⁻¹C(λI+θC)⁻¹μ + γ²·tr[((λI+θC)⁻¹C)²]/p
    κ  = (1/n)·tr C(θC + λI)⁻¹

and h = h_{κ,ℓ} the residual map of the loss. Every trace functional is
evaluated on the eigenvalues of C, so one sweep costs O(p) plus one
vectorized prox solve over the quadrature nodes.
"""

import time
from dataclasses import dataclass
from typing import Optional, Tuple, Dict, Any

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy import optimize
from scipy.stats import norm

from src.config import config
from src.models import MixtureModel, LossSpec, TheoryState, CalibrationResult
from src.services.losses import h_map, h_derivative
from src.services.mixture_model import gaussian_tail
from src.services.empirical_observables import resolvent_terms
from src.utils.errors import (
    ConvergenceError,
    IllPosedProblemError,
    InvalidParamsError,
    VacuousBoundError,
    NonMonotoneCalibrationError,
    ErmError
)
from src.utils.validators import validate_nonnegative, validate_count
from src.utils.logging import get_logger, log_solver_run

logger = get_logger(__name__)

MIN_DAMPING = 1.0 / 64
CALIBRATION_GRID = np.logspace(-8, 8, 17)


@dataclass(frozen=True)
class GaussHermite:
    """Nodes and weights for E[f(Z)], Z ~ N(0, 1): Σ w_k f(z_k)."""

    nodes: np.ndarray
    weights: np.ndarray

    @classmethod
    def build(cls, n_nodes: int) -> "GaussHermite":
        x, w = hermgauss(n_nodes)
        return cls(nodes=np.sqrt(2.0) * x, weights=w / np.sqrt(np.pi))

    def expect(self, values: np.ndarray) -> float:
        return float(self.weights @ values)


_QUADRATURE_CACHE: Dict[int, GaussHermite] = {}


def quadrature(n_nodes: Optional[int] = None) -> GaussHermite:
    """Cached Gauss–Hermite rule (127 nodes unless configured otherwise)."""
    if n_nodes is None:
        n_nodes = config.QUADRATURE_NODES if config else 127
    if n_nodes not in _QUADRATURE_CACHE:
        _QUADRATURE_CACHE[n_nodes] = GaussHermite.build(n_nodes)
    return _QUADRATURE_CACHE[n_nodes]


def gaussian_expectations(
    loss: LossSpec,
    kappa: float,
    m: float,
    sigma: float,
    rule: Optional[GaussHermite] = None
) -> Tuple[float, float, float]:
    """
    (E h(r), E h(r)², Cov[h(r), r]) for r ~ N(m, σ²).

    Args:
        loss: Loss specification
        kappa: Prox parameter κ
        m: Mean of r
        sigma: Standard deviation of r
        rule: Quadrature rule (default: cached 127-node rule)

    Returns:
        Tuple (mean, second moment, covariance with r)
    """
    rule = rule or quadrature()
    offsets = sigma * rule.nodes
    h = h_map(loss, kappa, m + offsets)
    return rule.expect(h), rule.expect(h * h), rule.expect(h * offsets)


def kappa_from_theta(model: MixtureModel, lam: float, theta: float, n: int) -> float:
    """κ = (1/n)·tr C(θC + λI)⁻¹."""
    eig = model.cov_eigvals
    return float(np.sum(eig / (theta * eig + lam)) / n)


def law_of_r(model: MixtureModel, lam: float, theta: float, eta: float, gamma: float) -> Tuple[float, float]:
    """(m, σ) given the fixed-point scalars."""
    terms = resolvent_terms(model, lam, theta)
    m = eta * terms['mu_R_mu']
    var = eta ** 2 * terms['mu_RCR_mu'] + gamma ** 2 * terms['trace_RC2'] / model.p
    return m, float(np.sqrt(var))


def _check_admissible(model: MixtureModel, lam: float, n: int):
    if lam == 0.0 and n <= model.p:
        raise IllPosedProblemError(
            "unregularized asymptotics require n/p > 1",
            data={'n': n, 'p': model.p}
        )


def square_loss_state(model: MixtureModel, lam: float, n: int) -> TheoryState:
    """
    Closed-form fixed point of the square loss ℓ(t) = (t−1)²/2.

    h(r) = (1−r)/(1+κ) gives θ = 1/(1+κ), η = 1/(1+κ+μᵀRμ) and a linear
    equation for γ²; κ solves κ = (1/n)Σ c_j(1+κ)/(c_j + λ(1+κ)).
    """
    lam = validate_nonnegative(lam, 'lambda')
    n = validate_count(n, 'n')
    _check_admissible(model, lam, n)
    p = model.p
    eig = model.cov_eigvals

    if lam == 0.0:
        kappa = p / (n - p)
    else:
        def excess(k):
            return k - np.sum(eig * (1.0 + k) / (eig + lam * (1.0 + k))) / n
        upper = float(np.sum(eig)) / (n * lam) + 1.0
        kappa = optimize.brentq(excess, 0.0, upper, xtol=1e-15, rtol=4 * np.finfo(float).eps)

    theta = 1.0 / (1.0 + kappa)
    terms = resolvent_terms(model, lam, theta)
    eta = 1.0 / (1.0 + kappa + terms['mu_R_mu'])
    m = eta * terms['mu_R_mu']
    scale = (1.0 + kappa) ** 2
    gamma2 = (p / n) * ((1.0 - m) ** 2 + eta ** 2 * terms['mu_RCR_mu']) / scale
    gamma2 /= 1.0 - terms['trace_RC2'] / (n * scale)
    gamma = float(np.sqrt(gamma2))
    sigma = float(np.sqrt(eta ** 2 * terms['mu_RCR_mu'] + gamma2 * terms['trace_RC2'] / p))

    return TheoryState(theta=theta, eta=eta, gamma=gamma, kappa=float(kappa), m=m, sigma=sigma,
                       lam=lam, loss_name="square", n=n, p=p)


class FixedPointSolver:
    """
    Damped Picard iteration on (θ, η, γ).

    Each sweep recomputes κ from θ, then (m, σ), then the three Gaussian
    expectations. When the residual keeps growing the damping is halved
    (down to 1/64); if the sweep budget runs out a root-finder polish is
    tried before reporting non-convergence.
    """

    def __init__(
        self,
        tol: Optional[float] = None,
        max_sweeps: Optional[int] = None,
        damping: Optional[float] = None,
        n_nodes: Optional[int] = None
    ):
        self.tol = tol if tol is not None else (config.THEORY_TOL if config else 1e-8)
        self.max_sweeps = max_sweeps if max_sweeps is not None else (config.THEORY_MAX_SWEEPS if config else 2000)
        self.damping = damping if damping is not None else (config.THEORY_DAMPING if config else 0.5)
        self.rule = quadrature(n_nodes)

    def sweep(self, model: MixtureModel, loss: LossSpec, lam: float, n: int, x: np.ndarray) -> np.ndarray:
        """One application of the fixed-point map to x = (θ, η, γ)."""
        theta, eta, gamma = x
        kappa = kappa_from_theta(model, lam, theta, n)
        m, sigma = law_of_r(model, lam, theta, eta, gamma)
        e_h, e_h2, cov = gaussian_expectations(loss, kappa, m, sigma, self.rule)
        return np.array([-cov / sigma ** 2, e_h, np.sqrt(model.p * e_h2 / n)])

    def _relative_residual(self, x: np.ndarray, fx: np.ndarray) -> float:
        return float(np.max(np.abs(fx - x) / np.maximum(np.abs(fx), 1e-300)))

    def _safe_sweep(self, model, loss, lam, n, x) -> Optional[np.ndarray]:
        if not (np.all(np.isfinite(x)) and x[0] > 0 and x[2] > 0):
            return None
        try:
            fx = self.sweep(model, loss, lam, n, x)
        except ErmError:
            return None
        return fx if np.all(np.isfinite(fx)) and fx[0] > 0 and fx[2] > 0 else None

    def _polish(self, model, loss, lam, n, x) -> Optional[np.ndarray]:
        def residual(v):
            fv = self._safe_sweep(model, loss, lam, n, v)
            return np.full(3, 1e6) if fv is None else fv - v

        try:
            result = optimize.root(residual, x, method='hybr', tol=self.tol * 1e-2)
        except (ValueError, FloatingPointError):
            return None
        if not result.success:
            return None
        fx = self._safe_sweep(model, loss, lam, n, result.x)
        if fx is None or self._relative_residual(result.x, fx) > self.tol:
            return None
        return result.x

    def solve(
        self,
        model: MixtureModel,
        loss: LossSpec,
        lam: float,
        n: int,
        init: Optional[TheoryState] = None
    ) -> TheoryState:
        """
        Solve the fixed-point system.

        Args:
            model: Mixture parameters
            loss: Loss specification
            lam: Ridge strength λ >= 0
            n: Sample count
            init: Optional warm start (defaults to the square-loss closed form)

        Returns:
            Converged TheoryState

        Raises:
            IllPosedProblemError: If λ = 0 and n/p <= 1
            ConvergenceError: If no fixed point is reached
        """
        lam = validate_nonnegative(lam, 'lambda')
        n = validate_count(n, 'n')
        _check_admissible(model, lam, n)
        start = time.perf_counter()

        if init is None:
            init = square_loss_state(model, lam, n)
        x = np.array([init.theta, init.eta, init.gamma], dtype=float)
        if self._safe_sweep(model, loss, lam, n, x) is None:
            x = np.array([1.0, 1.0, np.sqrt(model.p / n)])
        anchor = x.copy()

        damping = self.damping
        previous = np.inf
        growth = 0
        residual = np.inf
        converged = False
        sweeps = 0

        for sweeps in range(1, self.max_sweeps + 1):
            fx = self._safe_sweep(model, loss, lam, n, x)
            if fx is None:
                if damping <= MIN_DAMPING:
                    break
                damping = max(damping / 2.0, MIN_DAMPING)
                x = (1.0 - damping) * x + damping * anchor
                continue

            residual = self._relative_residual(x, fx)
            if residual <= self.tol:
                x = fx
                converged = True
                break

            growth = growth + 1 if residual > previous else 0
            if growth >= 5 and damping > MIN_DAMPING:
                damping = max(damping / 2.0, MIN_DAMPING)
                growth = 0
            previous = residual
            x = x + damping * (fx - x)

        if not converged:
            polished = self._polish(model, loss, lam, n, x)
            if polished is not None:
                x = polished
                converged = True

        duration_ms = (time.perf_counter() - start) * 1000
        if not converged:
            log_solver_run(logger, f"fixed_point[{loss.name}]", duration_ms, False, sweeps, residual,
                           "no fixed point reached")
            raise ConvergenceError(
                f"fixed_point[{loss.name}]", sweeps,
                residuals={'relative_residual': float(residual), 'theta': float(x[0]),
                           'eta': float(x[1]), 'gamma': float(x[2])},
                data={'lambda': lam, 'n': n, 'p': model.p}
            )

        theta, eta, gamma = (float(v) for v in x)
        kappa = kappa_from_theta(model, lam, theta, n)
        m, sigma = law_of_r(model, lam, theta, eta, gamma)
        fx = self.sweep(model, loss, lam, n, x)
        final_residual = self._relative_residual(x, fx)
        log_solver_run(logger, f"fixed_point[{loss.name}]", duration_ms, True, sweeps, final_residual)

        return TheoryState(theta=theta, eta=eta, gamma=gamma, kappa=kappa, m=m, sigma=sigma,
                           lam=lam, loss_name=loss.name, n=n, p=model.p,
                           converged=True, iterations=sweeps, residual=final_residual)


_default_solver = None


def _solver() -> FixedPointSolver:
    global _default_solver
    if _default_solver is None:
        _default_solver = FixedPointSolver()
    return _default_solver


def solve_fixed_point(
    model: MixtureModel,
    loss: LossSpec,
    lam: float,
    n: int,
    init: Optional[TheoryState] = None
) -> TheoryState:
    """Solve the fixed-point system with default settings. See FixedPointSolver.solve."""
    return _solver().solve(model, loss, lam, n, init=init)


def predicted_error(state: TheoryState) -> float:
    """Asymptotic classification error Q(m/σ)."""
    return float(gaussian_tail(state.m / state.sigma))


def bias_ratio(state: TheoryState) -> float:
    """Directional bias ω = λ/θ."""
    return state.lam / state.theta


def expected_direction(state: TheoryState, model: MixtureModel) -> np.ndarray:
    """E[β̃] = η(λI + θC)⁻¹μ."""
    V = model.cov_eigvecs
    return state.eta * (V @ (model.mu_eig / (state.lam + state.theta * model.cov_eigvals)))


def kappa_lambda_star(model: MixtureModel, n: int) -> float:
    """
    Limit of λκ (= λ/θ for the square loss) as λ → 0⁺ when n < p:
    the root s of 1 = (1/n)·tr C(C + sI)⁻¹.
    """
    n = validate_count(n, 'n')
    if n >= model.p:
        raise InvalidParamsError(
            "(κλ)* is defined only for n < p",
            data={'n': n, 'p': model.p}
        )
    eig = model.cov_eigvals

    def excess(s):
        return np.sum(eig / (eig + s)) / n - 1.0

    return float(optimize.brentq(excess, 0.0, float(np.sum(eig)) / n, xtol=1e-15,
                                 rtol=4 * np.finfo(float).eps))


def lower_bound_exponent(model: MixtureModel, n: int, omega: float) -> float:
    """
    e(ω) = (1 − T/n)·A² / (B + T/n) with R = (ωI + C)⁻¹,
    A = μᵀRμ, B = μᵀRCRμ and T = tr[(RC)²].

    Raises:
        VacuousBoundError: If 1 − T/n <= 0
    """
    omega = validate_nonnegative(omega, 'omega')
    n = validate_count(n, 'n')
    terms = resolvent_terms(model, omega, 1.0)
    bracket = 1.0 - terms['trace_RC2'] / n
    if bracket <= 0:
        raise VacuousBoundError(omega, bracket)
    return bracket * terms['mu_R_mu'] ** 2 / (terms['mu_RCR_mu'] + terms['trace_RC2'] / n)


def bias_fixed_lower_bound(model: MixtureModel, n: int, omega: float) -> float:
    """Error lower bound Q(√e(ω)) shared by all classifiers with bias ratio ω."""
    return float(gaussian_tail(np.sqrt(lower_bound_exponent(model, n, omega))))


def _bias_curve(model: MixtureModel, loss: LossSpec, n: int):
    """λ ↦ λ/θ on the calibration grid, solved from large λ downwards with warm starts."""
    lams, omegas, states = [], [], []
    init = None
    for lam in CALIBRATION_GRID[::-1]:
        try:
            state = solve_fixed_point(model, loss, float(lam), n, init=init)
        except ConvergenceError:
            logger.warning(f"Calibration grid point lambda={lam:g} skipped for {loss.name}")
            continue
        init = state
        lams.append(float(lam))
        omegas.append(bias_ratio(state))
        states.append(state)
    return np.array(lams[::-1]), np.array(omegas[::-1]), states[::-1]


def _unregularized_state(model: MixtureModel, loss: LossSpec, n: int) -> Optional[TheoryState]:
    """Fixed point at λ = 0, or None when the unregularized problem is not admissible."""
    if n <= model.p:
        return None
    try:
        return solve_fixed_point(model, loss, 0.0, n)
    except ErmError as e:
        logger.info(f"lambda=0 not admissible for {loss.name}: {e.message}")
        return None


def bias_ratio_range(model: MixtureModel, loss: LossSpec, n: int) -> Tuple[float, float]:
    """Attainable (ω_min, ω_max) over λ ∈ [1e-8, 1e8], with ω_min = 0 when λ = 0 is admissible."""
    _, omegas, _ = _bias_curve(model, loss, n)
    if omegas.size == 0:
        raise ConvergenceError(f"bias_curve[{loss.name}]", len(CALIBRATION_GRID))
    low = 0.0 if _unregularized_state(model, loss, n) is not None else float(omegas.min())
    return low, float(omegas.max())


def calibrate_lambda_for_bias(
    model: MixtureModel,
    loss: LossSpec,
    n: int,
    target_omega: float
) -> CalibrationResult:
    """
    Find λ with λ/θ(λ) = ω.

    Bisection-type root finding on log λ inside the bracket located on the
    grid 1e-8..1e8; monotonicity of λ ↦ λ/θ is checked on the grid first.
    Targets below the first grid point are bracketed between λ = 0 and
    λ = 1e-8 when the unregularized problem is admissible.

    Returns:
        CalibrationResult; `attainable` is False (with the achieved range)
        when ω lies outside the range reachable on the grid

    Raises:
        NonMonotoneCalibrationError: If λ/θ is not increasing on the grid
    """
    target = validate_nonnegative(target_omega, 'target_omega')
    n = validate_count(n, 'n')

    if target == 0.0 and n > model.p:
        return CalibrationResult(target_omega=0.0, attainable=True, lam=0.0, achieved_omega=0.0,
                                 omega_range=(0.0, np.inf), loss_name=loss.name)

    lams, omegas, states = _bias_curve(model, loss, n)
    if omegas.size < 2:
        raise ConvergenceError(f"bias_curve[{loss.name}]", len(CALIBRATION_GRID))
    if np.any(np.diff(omegas) <= 0):
        raise NonMonotoneCalibrationError(loss.name, data={'omegas': omegas.tolist()})

    zero_state = _unregularized_state(model, loss, n)
    low = 0.0 if zero_state is not None else float(omegas[0])
    omega_range = (low, float(omegas[-1]))
    if not low <= target <= omegas[-1]:
        logger.info(
            f"Bias ratio {target:g} not attainable for {loss.name}",
            extra={'target_omega': target, 'omega_range': omega_range}
        )
        return CalibrationResult(target_omega=target, attainable=False, lam=None, achieved_omega=None,
                                 omega_range=omega_range, loss_name=loss.name)

    warm = {'state': zero_state}
    if target < omegas[0]:
        # λ/θ vanishes at λ = 0, so [0, 1e-8] brackets the root
        def gap(lam):
            state = solve_fixed_point(model, loss, float(lam), n, init=warm['state'])
            warm['state'] = state
            return bias_ratio(state) - target

        lam = float(optimize.brentq(gap, 0.0, float(lams[0]), xtol=1e-14 * float(lams[0]), rtol=1e-14))
    else:
        k = int(np.searchsorted(omegas, target))
        if omegas[k] == target:
            return CalibrationResult(target_omega=target, attainable=True, lam=float(lams[k]),
                                     achieved_omega=float(omegas[k]), omega_range=omega_range,
                                     loss_name=loss.name)
        warm['state'] = states[k]

        def gap(log_lam):
            state = solve_fixed_point(model, loss, float(np.exp(log_lam)), n, init=warm['state'])
            warm['state'] = state
            return bias_ratio(state) - target

        log_lam = optimize.brentq(gap, np.log(lams[k - 1]), np.log(lams[k]), xtol=1e-14, rtol=1e-14)
        lam = float(np.exp(log_lam))

    achieved = bias_ratio(solve_fixed_point(model, loss, lam, n, init=warm['state']))

    if abs(achieved - target) > 1e-6 * max(1.0, target):
        logger.warning(f"Calibration for {loss.name} reached omega={achieved:g} (target {target:g})")
    return CalibrationResult(target_omega=target, attainable=True, lam=lam, achieved_omega=achieved,
                             omega_range=omega_range, loss_name=loss.name)


def residual_density(state: TheoryState, r_grid) -> np.ndarray:
    """Density of r ~ N(m, σ²) on a grid."""
    return norm.pdf(np.asarray(r_grid, dtype=float), loc=state.m, scale=state.sigma)


def dual_density(state: TheoryState, loss: LossSpec, c_grid, resolution: int = 4001) -> np.ndarray:
    """Push-forward density of c = h(r) for r ~ N(m, σ²), evaluated on c_grid."""
    r = state.m + state.sigma * np.linspace(-9.0, 9.0, resolution)
    h = np.asarray(h_map(loss, state.kappa, r))
    slope = np.abs(np.asarray(h_derivative(loss, state.kappa, r)))
    density = norm.pdf(r, loc=state.m, scale=state.sigma) / np.maximum(slope, 1e-300)
    order = np.argsort(h)
    return np.interp(np.asarray(c_grid, dtype=float), h[order], density[order], left=0.0, right=0.0)


def theory_row(state: TheoryState) -> Dict[str, Any]:
    """CSV row matching the empirical observables schema."""
    return {
        'source': 'theory',
        'loss': state.loss_name,
        'lambda': state.lam,
        'theta': state.theta,
        'eta': state.eta,
        'gamma': state.gamma,
        'kappa': state.kappa,
        'predicted_error': predicted_error(state),
    }
