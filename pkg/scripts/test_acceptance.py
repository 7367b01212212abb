"""Monte Carlo checks at full problem sizes (run with `-m slow`)."""

from pathlib import Path

import numpy as np
import pytest

from src.experiments.config import build_model, config_from_dict, load_config
from src.experiments.figures import sweep_config, average_coefficients, mixing_curve, _combination_unit
from src.experiments.runner import run_experiment, summarize, map_units
from src.models import NoiseLaw
from src.services.losses import builtin_loss, h_map
from src.services.mixture_model import sample_dataset
from src.services.erm_solver import solve_erm
from src.services.empirical_observables import compute_observables, stochastic_error_prediction
from src.services.combiner import optimal_combination
from src.services.theory_engine import solve_fixed_point, square_loss_state, predicted_error

pytestmark = pytest.mark.slow

CONFIGS_DIR = Path(__file__).resolve().parent.parent / "configs"


def test_fig1_right_empirical_mean(tmp_path):
    config = sweep_config("fig1_right", reps=100).model_copy(update={'n_values': [900]})
    records = run_experiment(config, csv_path=tmp_path / "fig1_right.csv")
    (row,) = summarize(records)
    assert row['trials'] == 100
    assert row['err_emp'] == pytest.approx(0.1424, abs=4e-3)
    assert row['err_theory'] == pytest.approx(0.1425, abs=5e-4)


def test_fig2_right_stochastic_prediction(tmp_path):
    config = sweep_config("fig2_right", reps=100).model_copy(update={'n_values': [900, 1800, 3000]})
    summary = summarize(run_experiment(config, csv_path=tmp_path / "fig2_right.csv"))
    expected = {900: 0.1467, 1800: 0.1082, 3000: 0.0948}
    assert [row['n'] for row in summary] == list(expected)
    for row in summary:
        assert row['trials'] == 100
        assert row['err_stoch'] == pytest.approx(expected[row['n']], abs=5e-3)
        assert row['err_stoch'] == pytest.approx(row['err_theory'], abs=5e-3)


@pytest.mark.parametrize("name", ["universality_rademacher", "universality_uniform"])
def test_universality(tmp_path, name):
    config = load_config(CONFIGS_DIR / f"{name}.toml")
    summary = summarize(run_experiment(config, csv_path=tmp_path / f"{name}.csv"))
    assert {row['loss'] for row in summary} == {"logistic", "square"}
    for row in summary:
        assert row['trials'] == config.replications
        assert row['err_emp'] == pytest.approx(row['err_theory'], abs=5e-3)


def test_residual_distribution_matches_theory():
    p = 256
    n = 6 * p
    model = build_model(p, "spike:1", "scaled:2")
    loss = builtin_loss("logistic")
    data = sample_dataset(model, NoiseLaw.GAUSSIAN, n, seed=0)
    obs = compute_observables(data, solve_erm(data, loss, 0.0), loss)
    state = solve_fixed_point(model, loss, 0.0, n)

    assert obs.r.mean() == pytest.approx(state.m, rel=0.03)
    assert obs.r.var() == pytest.approx(state.sigma ** 2, rel=0.03)
    assert np.median(np.abs(obs.c - h_map(loss, state.kappa, obs.r))) <= 5.0 / np.sqrt(p)


def test_fig7_combination_against_least_squares():
    p = 250
    model = build_model(p, "spike:0.6", "identity")
    n = 7 * p
    square = builtin_loss("square")
    results = []
    for seed in range(60):
        unit = _combination_unit((model, n, seed))
        assert unit is not None
        results.append(unit)

        data = sample_dataset(model, NoiseLaw.GAUSSIAN, n, seed)
        specs = [builtin_loss("logistic"), builtin_loss("square_root")]
        sols = [solve_erm(data, loss, 0.0) for loss in specs]
        obs_list = [compute_observables(data, sol, loss) for sol, loss in zip(sols, specs)]
        best = optimal_combination(obs_list, sols, model)
        ls_sol = solve_erm(data, square, 0.0)
        ls_pred = stochastic_error_prediction(compute_observables(data, ls_sol, square), model, 0.0)
        assert best.predicted_error >= ls_pred - 1e-6

    mean = {key: np.mean([r[key] for r in results]) for key in results[0]}
    assert mean['err_combined'] <= min(mean['err_logistic'], mean['err_square_root']) + 2e-3
    assert mean['err_combined_pred'] >= predicted_error(square_loss_state(model, 0.0, n)) - 5e-3


def test_fig7_pinned_means_at_seven_samples_per_dimension():
    p = 250
    model = build_model(p, "spike:0.6", "identity")
    units = [(model, 7 * p, seed) for seed in range(300)]
    results = [res for res in map_units(_combination_unit, units) if res is not None]
    assert len(results) >= 295

    mean = {key: np.mean([r[key] for r in results]) for key in results[0]}
    assert mean['err_logistic'] == pytest.approx(0.3203, abs=3e-3)
    assert mean['err_square_root'] == pytest.approx(0.3200, abs=3e-3)
    assert mean['err_combined'] == pytest.approx(0.3192, abs=3e-3)
    assert mean['err_combined'] <= min(mean['err_logistic'], mean['err_square_root'])


def test_plug_in_scalars_match_fixed_point():
    p = 300
    n = 9 * p
    model = build_model(p, "ones:sqrt2", "identity")
    loss = builtin_loss("logistic")
    state = solve_fixed_point(model, loss, 0.5, n)
    data = sample_dataset(model, NoiseLaw.GAUSSIAN, n, seed=4)
    obs = compute_observables(data, solve_erm(data, loss, 0.5), loss)
    assert obs.theta_hat == pytest.approx(state.theta, rel=0.05)
    assert obs.eta_hat == pytest.approx(state.eta, rel=0.05)
    assert obs.gamma_hat == pytest.approx(state.gamma, rel=0.05)


def test_fig5_right_average_coefficients():
    p = 60
    model = build_model(p, "ones:sqrt2", "scaled:2")
    empirical, used = average_coefficients(model, "logistic", 1.0, 6 * p, 1000)
    assert used == 1000
    assert empirical.mean() == pytest.approx(0.0471, abs=1e-3)
    assert np.abs(empirical - 0.0471).max() <= 5e-3


def test_fig6_left_mixing_curve_minimum():
    p = 256
    model = build_model(p, "spike:1", "scaled:2")
    minima = []
    for seed in range(4):
        rows = mixing_curve(model, ("logistic", "exponential"), 10 * p, seed)
        minima.append(min(row['err_pred'] for row in rows))
    assert np.mean(minima) == pytest.approx(0.2719, abs=6e-3)
