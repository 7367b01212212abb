"""Tests for the deterministic fixed-point characterization and the optimality bounds."""

import numpy as np
import pytest
from scipy import integrate, optimize

from conftest import random_spd
from src.models import MixtureModel
from src.experiments.config import build_model
from src.services.losses import builtin_loss, h_map
from src.services.theory_engine import (
    FixedPointSolver,
    quadrature,
    gaussian_expectations,
    kappa_from_theta,
    square_loss_state,
    solve_fixed_point,
    predicted_error,
    bias_ratio,
    expected_direction,
    kappa_lambda_star,
    lower_bound_exponent,
    bias_fixed_lower_bound,
    bias_ratio_range,
    calibrate_lambda_for_bias,
    residual_density,
    dual_density,
    theory_row
)
from src.utils.errors import IllPosedProblemError, InvalidParamsError, VacuousBoundError

P = 300


@pytest.fixture(scope="module")
def fig2_model():
    return build_model(P, "ones:sqrt2", "identity")


@pytest.fixture(scope="module")
def fig1_model():
    return build_model(P, "block:sqrt2,sqrt8", "rank1:1,6")


def test_gauss_hermite_matches_trapezoid():
    loss = builtin_loss("logistic")
    kappa, m, sigma = 0.8, 0.6, 1.3
    z = np.linspace(-12.0, 12.0, 24001)
    weight = np.exp(-z ** 2 / 2) / np.sqrt(2 * np.pi)
    h = h_map(loss, kappa, m + sigma * z)
    reference = (
        integrate.trapezoid(h * weight, z),
        integrate.trapezoid(h * h * weight, z),
        integrate.trapezoid(h * sigma * z * weight, z),
    )
    np.testing.assert_allclose(gaussian_expectations(loss, kappa, m, sigma), reference, atol=1e-8)


def test_quadrature_rule_is_cached_and_normalized():
    rule = quadrature(127)
    assert rule is quadrature(127)
    assert rule.expect(np.ones_like(rule.nodes)) == pytest.approx(1.0, abs=1e-13)
    assert rule.expect(rule.nodes ** 2) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("lam,n", [(0.0, 900), (0.5, 900), (2.0, 200)])
def test_square_closed_form_is_a_fixed_point(fig2_model, lam, n):
    if lam == 0.0 and n <= P:
        pytest.skip("inadmissible")
    state = square_loss_state(fig2_model, lam, n)
    x = np.array([state.theta, state.eta, state.gamma])
    fx = FixedPointSolver().sweep(fig2_model, builtin_loss("square"), lam, n, x)
    np.testing.assert_allclose(fx, x, rtol=1e-8)
    assert state.theta == pytest.approx(1.0 / (1.0 + state.kappa), rel=1e-14)
    assert state.kappa == pytest.approx(kappa_from_theta(fig2_model, lam, state.theta, n), rel=1e-10)


def test_square_solver_agrees_with_closed_form(toeplitz_model):
    loss = builtin_loss("square")
    exact = square_loss_state(toeplitz_model, 0.3, 100)
    solved = solve_fixed_point(toeplitz_model, loss, 0.3, 100)
    assert solved.theta == pytest.approx(exact.theta, rel=1e-6)
    assert solved.eta == pytest.approx(exact.eta, rel=1e-6)
    assert solved.gamma == pytest.approx(exact.gamma, rel=1e-6)


@pytest.mark.parametrize("n,expected", [(900, 0.1425), (2100, 0.1030)])
def test_unregularized_least_squares_error(fig1_model, fig2_model, n, expected):
    assert predicted_error(square_loss_state(fig1_model, 0.0, n)) == pytest.approx(expected, abs=5e-4)
    # depends on the model only through μᵀC⁻¹μ
    assert predicted_error(square_loss_state(fig2_model, 0.0, n)) == pytest.approx(expected, abs=5e-4)


def test_rank_one_model_has_expected_spectrum(fig1_model):
    assert fig1_model.cov_eigvals.max() == pytest.approx(4.0, rel=1e-10)
    s = fig1_model.mu @ fig1_model.inverse_apply(fig1_model.mu)
    assert s == pytest.approx(2.0, rel=1e-10)


@pytest.mark.parametrize("lam,expected", [
    (0.015625, 0.1225),
    (0.25, 0.1002),
    (4.0, 0.0953),
    (1024.0, 0.0952),
])
def test_logistic_error_curve(fig2_model, lam, expected):
    state = solve_fixed_point(fig2_model, builtin_loss("logistic"), lam, 900)
    assert state.converged
    assert predicted_error(state) == pytest.approx(expected, abs=3e-3)


def test_logistic_error_decreases_along_lambda(fig2_model):
    loss = builtin_loss("logistic")
    errors = []
    init = None
    for lam in (1024.0, 64.0, 4.0, 0.25, 0.015625):
        init = solve_fixed_point(fig2_model, loss, lam, 900, init=init)
        errors.append(predicted_error(init))
    assert all(a <= b + 1e-6 for a, b in zip(errors, errors[1:]))


@pytest.mark.parametrize("name", ["logistic", "exponential", "square_root"])
def test_scalars_respect_variance_inequality(fig2_model, name):
    n = 900
    state = solve_fixed_point(fig2_model, builtin_loss(name), 0.5, n)
    assert state.theta > 0
    assert state.kappa == pytest.approx(kappa_from_theta(fig2_model, 0.5, state.theta, n), rel=1e-12)
    bound = ((n / P) * state.gamma ** 2 - state.eta ** 2) / state.sigma ** 2
    assert state.theta ** 2 <= bound * (1.0 + 1e-6)


def test_square_loss_attains_bias_fixed_bound(toeplitz_model):
    n = 160
    for lam in (0.1, 1.0, 5.0):
        state = square_loss_state(toeplitz_model, lam, n)
        omega = bias_ratio(state)
        assert (state.m / state.sigma) ** 2 == pytest.approx(
            lower_bound_exponent(toeplitz_model, n, omega), rel=1e-6)


def test_other_losses_respect_bias_fixed_bound(toeplitz_model):
    n = 160
    for name in ("logistic", "exponential"):
        state = solve_fixed_point(toeplitz_model, builtin_loss(name), 0.5, n)
        bound = bias_fixed_lower_bound(toeplitz_model, n, bias_ratio(state))
        assert predicted_error(state) >= bound - 1e-6


@pytest.mark.parametrize("ratio", [4, 8])
def test_least_squares_is_optimal_without_regularization(rng, ratio):
    p = 20
    n = ratio * p
    for _ in range(3):
        C = random_spd(rng, p)
        mu = rng.standard_normal(p)
        mu *= np.sqrt(0.5 / (mu @ np.linalg.solve(C, mu)))
        model = MixtureModel.from_covariance(mu, C)
        ls = predicted_error(square_loss_state(model, 0.0, n))
        for name in ("logistic", "exponential"):
            other = predicted_error(solve_fixed_point(model, builtin_loss(name), 0.0, n))
            assert ls <= other + 1e-6


def test_kappa_lambda_star_on_identity():
    model = MixtureModel.isotropic(np.full(100, 0.1))
    assert kappa_lambda_star(model, 50) == pytest.approx(1.0, rel=1e-10)
    with pytest.raises(InvalidParamsError):
        kappa_lambda_star(model, 100)


def test_kappa_lambda_star_is_small_lambda_limit(toeplitz_model):
    n = 25
    star = kappa_lambda_star(toeplitz_model, n)
    state = square_loss_state(toeplitz_model, 1e-7, n)
    assert bias_ratio(state) == pytest.approx(star, rel=1e-4)


def test_vacuous_bound_without_bias_when_underdetermined(isotropic_model):
    with pytest.raises(VacuousBoundError):
        lower_bound_exponent(isotropic_model, isotropic_model.p, 0.0)
    assert lower_bound_exponent(isotropic_model, isotropic_model.p, 1.0) > 0


def test_unregularized_theory_requires_enough_samples(isotropic_model):
    with pytest.raises(IllPosedProblemError):
        square_loss_state(isotropic_model, 0.0, isotropic_model.p)
    with pytest.raises(IllPosedProblemError):
        solve_fixed_point(isotropic_model, builtin_loss("logistic"), 0.0, isotropic_model.p)


def test_expected_direction_on_isotropic_models():
    p = 60
    model = build_model(p, "ones:sqrt2", "scaled:2")
    state = solve_fixed_point(model, builtin_loss("logistic"), 1.0, 6 * p)
    direction = expected_direction(state, model)
    np.testing.assert_allclose(direction, direction[0], rtol=1e-10)
    assert direction[0] == pytest.approx(state.eta * np.sqrt(2.0 / p) / (1.0 + 2.0 * state.theta), rel=1e-10)


def test_expected_direction_unregularized_rank_one_model():
    p = 60
    model = build_model(p, "block:sqrt2,sqrt8", "rank1:3,6")
    state = solve_fixed_point(model, builtin_loss("logistic"), 0.0, 6 * p)
    direction = expected_direction(state, model)
    # C⁻¹μ is proportional to the all-ones vector
    np.testing.assert_allclose(direction, direction.mean(), rtol=1e-8)


def test_calibration_round_trip(toeplitz_model):
    n = 160
    target = bias_ratio(square_loss_state(toeplitz_model, 2.0, n))
    result = calibrate_lambda_for_bias(toeplitz_model, builtin_loss("square"), n, target)
    assert result.attainable
    assert result.lam == pytest.approx(2.0, rel=1e-5)
    assert result.achieved_omega == pytest.approx(target, rel=1e-6)


def test_calibration_reports_unattainable_targets(toeplitz_model):
    n = 160
    result = calibrate_lambda_for_bias(toeplitz_model, builtin_loss("square"), n, 1e12)
    assert not result.attainable
    assert result.lam is None
    low, high = bias_ratio_range(toeplitz_model, builtin_loss("square"), n)
    assert low == 0.0
    assert high < 1e12
    assert result.omega_range == (low, high)


def test_calibration_below_the_grid_brackets_from_zero(toeplitz_model):
    n = 160
    target = bias_ratio(square_loss_state(toeplitz_model, 1e-9, n))
    result = calibrate_lambda_for_bias(toeplitz_model, builtin_loss("square"), n, target)
    assert result.attainable
    assert result.omega_range[0] == 0.0
    assert result.lam == pytest.approx(1e-9, rel=1e-4)
    assert result.achieved_omega == pytest.approx(target, rel=1e-6)


def test_calibration_without_unregularized_fit_starts_at_grid(toeplitz_model):
    n = 20
    smallest = bias_ratio(square_loss_state(toeplitz_model, 1e-8, n))
    result = calibrate_lambda_for_bias(toeplitz_model, builtin_loss("square"), n, 0.5 * smallest)
    assert not result.attainable
    assert result.omega_range[0] == pytest.approx(smallest, rel=1e-6)
    assert bias_ratio_range(toeplitz_model, builtin_loss("square"), n)[0] > 0.0


def test_zero_bias_is_unregularized_when_admissible(toeplitz_model):
    result = calibrate_lambda_for_bias(toeplitz_model, builtin_loss("logistic"), 160, 0.0)
    assert result.attainable and result.lam == 0.0


def test_densities_integrate_to_one(toeplitz_model):
    loss = builtin_loss("logistic")
    state = solve_fixed_point(toeplitz_model, loss, 0.5, 160)
    r = np.linspace(state.m - 10 * state.sigma, state.m + 10 * state.sigma, 20001)
    assert integrate.trapezoid(residual_density(state, r), r) == pytest.approx(1.0, abs=1e-6)

    c = np.linspace(0.0, 1.0, 20001)
    mass = integrate.trapezoid(dual_density(state, loss, c, resolution=20001), c)
    assert mass == pytest.approx(1.0, abs=1e-2)


def test_theory_row_fields(toeplitz_model):
    state = square_loss_state(toeplitz_model, 0.5, 160)
    row = theory_row(state)
    assert row['source'] == 'theory'
    assert row['loss'] == 'square'
    assert row['predicted_error'] == predicted_error(state)
    assert state.as_dict()['theta'] == state.theta


def test_regularized_logistic_error_on_rank_one_model(fig1_model):
    state = solve_fixed_point(fig1_model, builtin_loss("logistic"), 0.25, 900)
    assert predicted_error(state) == pytest.approx(0.1019, abs=4e-3)


def test_expected_coordinate_value_on_scaled_identity():
    p = 60
    model = build_model(p, "ones:sqrt2", "scaled:2")
    state = solve_fixed_point(model, builtin_loss("logistic"), 1.0, 6 * p)
    np.testing.assert_allclose(expected_direction(state, model), 0.0471, atol=5e-4)


def test_tuned_square_loss_beats_tuned_convex_losses(fig1_model):
    n = 900
    lambdas = [2.0 ** k for k in range(-6, 11)]
    minima = {}
    for name in ("logistic", "exponential"):
        loss = builtin_loss(name)
        errors = []
        init = None
        for lam in lambdas[::-1]:
            init = solve_fixed_point(fig1_model, loss, lam, n, init=init)
            errors.append(predicted_error(init))
        minima[name] = min(errors)
        if name == "logistic":
            assert 0 < int(np.argmin(errors)) < len(lambdas) - 1

    result = optimize.minimize_scalar(
        lambda log_lam: predicted_error(square_loss_state(fig1_model, float(np.exp(log_lam)), n)),
        bounds=(np.log(lambdas[0]), np.log(lambdas[-1])), method="bounded",
        options={'xatol': 1e-6},
    )
    square = square_loss_state(fig1_model, float(np.exp(result.x)), n)
    min_square = predicted_error(square)
    assert min_square <= minima["logistic"] + 1e-4
    assert min_square <= minima["exponential"] + 1e-4
    assert min_square == pytest.approx(bias_fixed_lower_bound(fig1_model, n, bias_ratio(square)), abs=1e-6)
