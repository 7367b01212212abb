"""
Figure reproduction.

Each figure writes its CSV tables (authoritative) and SVG plots under one
output directory and returns the list of files written. Error-curve figures
are plain experiment configurations run through `run_experiment`; the
others drive the services directly.
"""

from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from src.config import config as settings
from src.experiments.config import ExperimentConfig, OutputSpec, config_from_dict, build_model
from src.experiments.runner import run_experiment, summarize, write_table, map_units
from src.experiments import plotting
from src.models import MixtureModel, NoiseLaw
from src.services.losses import builtin_loss, h_map
from src.services.mixture_model import sample_dataset, classification_error
from src.services.erm_solver import solve_erm
from src.services.empirical_observables import compute_observables
from src.services.theory_engine import (
    solve_fixed_point,
    square_loss_state,
    predicted_error,
    expected_direction,
    residual_density,
    dual_density
)
from src.services.combiner import (
    mixing_ratio_weights,
    optimal_combination,
    predicted_combination_error
)
from src.utils.errors import ErmError
from src.utils.validators import validate_choice, validate_count
from src.utils.logging import get_logger

logger = get_logger(__name__)

LAMBDA_GRID = [2.0 ** k for k in range(-6, 11)]
RHO_GRID = np.linspace(-4.0, 4.0, 81)

# Error-curve sweeps; shipped as TOML under configs/ as well.
SWEEPS: Dict[str, dict] = {
    "fig1_left": dict(p=300, mu="block:sqrt2,sqrt8", cov="rank1:1,6", losses=["logistic"],
                      lambdas=LAMBDA_GRID, n_values=[900], replications=500),
    "fig1_right": dict(p=300, mu="block:sqrt2,sqrt8", cov="rank1:1,6", losses=["square"],
                       lambdas=[0.0], n_values=list(range(900, 3001, 300)), replications=500),
    "fig2_left": dict(p=300, mu="ones:sqrt2", cov="identity", losses=["logistic"],
                      lambdas=LAMBDA_GRID, n_values=[900], replications=1),
    "fig2_right": dict(p=300, mu="ones:sqrt2", cov="identity", losses=["square"],
                       lambdas=[0.0], n_values=list(range(900, 3001, 300)), replications=1),
}


HISTOGRAM_SETUP = config_from_dict(dict(
    name="fig3", p=256, mu="spike:1", cov="scaled:2", losses=["logistic"], lambdas=[0.0],
    n_over_p=[6.0], outputs={'histogram_bins': 50},
))


def sweep_config(name: str, reps: Optional[int] = None, seed: int = 0) -> ExperimentConfig:
    """Configuration of a named error-curve sweep."""
    raw = dict(SWEEPS[name], name=name, base_seed=seed)
    if reps is not None:
        raw["replications"] = reps
    return config_from_dict(raw)


def _sweep(name: str, x_field: str, out_dir: Path, reps, seed, workers) -> List[Path]:
    config = sweep_config(name, reps, seed)
    records_path = out_dir / f"{name}.csv"
    records = run_experiment(config, workers=workers, csv_path=records_path)
    summary = summarize(records)
    summary_path = write_table(summary, out_dir / f"{name}_summary.csv")

    plot_path = plotting.plot_summary(out_dir / f"{name}.svg", summary, by_lambda=x_field == "lambda",
                                      title=f"{config.losses[0]} loss, p={config.p}")
    return [records_path, summary_path, plot_path]


def fig1(out_dir: Path, reps=None, seed=0, workers=None) -> List[Path]:
    logger.info("Rank-one covariance term uses the unit factor 6·[0;1][0;1]ᵀ/p")
    return (_sweep("fig1_left", "lambda", out_dir, reps, seed, workers)
            + _sweep("fig1_right", "n", out_dir, reps, seed, workers))


def fig2(out_dir: Path, reps=None, seed=0, workers=None) -> List[Path]:
    return (_sweep("fig2_left", "lambda", out_dir, reps, seed, workers)
            + _sweep("fig2_right", "n", out_dir, reps, seed, workers))


def _histogram_rows(samples: np.ndarray, density: Callable, bins: int) -> Tuple[List[dict], np.ndarray]:
    counts, edges = np.histogram(samples, bins=bins, density=True)
    centers = (edges[:-1] + edges[1:]) / 2.0
    theory = density(centers)
    rows = [
        {'bin_left': lo, 'bin_right': hi, 'empirical_density': emp, 'theory_density': th}
        for lo, hi, emp, th in zip(edges[:-1], edges[1:], counts, theory)
    ]
    return rows, centers


def fig3(out_dir: Path, reps=None, seed=0, workers=None, bins: Optional[int] = None) -> List[Path]:
    """Histograms of r_i and c_i against N(m, σ²) and the push-forward law of h(r)."""
    setup = HISTOGRAM_SETUP if bins is None else HISTOGRAM_SETUP.model_copy(
        update={'outputs': OutputSpec(histogram_bins=validate_count(bins, 'bins', minimum=2))}
    )
    bins = setup.outputs.histogram_bins
    model = setup.build_model()
    loss = builtin_loss(setup.losses[0])
    lam = setup.lambdas[0]
    (n,) = setup.sample_sizes

    data = sample_dataset(model, setup.noise_law, n, seed)
    sol = solve_erm(data, loss, lam)
    obs = compute_observables(data, sol, loss)
    state = solve_fixed_point(model, loss, lam, n)

    paths = []
    r_rows, _ = _histogram_rows(obs.r, lambda grid: residual_density(state, grid), bins)
    c_rows, _ = _histogram_rows(obs.c, lambda grid: dual_density(state, loss, grid), bins)
    paths.append(write_table(r_rows, out_dir / "fig3_r_hist.csv"))
    paths.append(write_table(c_rows, out_dir / "fig3_c_hist.csv"))

    samples = [
        {'index': i, 'r': r, 'c': c, 'h_of_r': h}
        for i, (r, c, h) in enumerate(zip(obs.r, obs.c, h_map(loss, state.kappa, obs.r)))
    ]
    paths.append(write_table(samples, out_dir / "fig3_samples.csv"))

    r_grid = np.linspace(obs.r.min(), obs.r.max(), 400)
    c_grid = np.linspace(obs.c.min(), obs.c.max(), 400)
    paths.append(plotting.plot_histogram(out_dir / "fig3_r.svg", obs.r, r_grid,
                                         residual_density(state, r_grid), "r", bins))
    paths.append(plotting.plot_histogram(out_dir / "fig3_c.svg", obs.c, c_grid,
                                         dual_density(state, loss, c_grid), "c", bins))
    logger.info(
        f"fig3: empirical r mean {obs.r.mean():.4f} var {obs.r.var():.4f}, "
        f"theory m {state.m:.4f} sigma^2 {state.sigma ** 2:.4f}"
    )
    return paths


def _fit_unit(unit) -> Optional[np.ndarray]:
    model, loss_name, lam, n, seed = unit
    data = sample_dataset(model, NoiseLaw.GAUSSIAN, n, seed)
    try:
        return solve_erm(data, builtin_loss(loss_name), lam).beta
    except ErmError:
        return None


def average_coefficients(
    model: MixtureModel,
    loss_name: str,
    lam: float,
    n: int,
    reps: int,
    seed: int = 0,
    workers: Optional[int] = None
) -> Tuple[np.ndarray, int]:
    """Coordinate-wise mean of β̂ over independent trials; also returns the number of fits used."""
    units = [(model, loss_name, lam, n, seed + trial) for trial in range(reps)]
    betas = [beta for beta in map_units(_fit_unit, units, workers) if beta is not None]
    if not betas:
        return np.full(model.p, np.nan), 0
    return np.mean(betas, axis=0), len(betas)


def _coordinate_figure(name: str, model: MixtureModel, out_dir: Path, reps, seed, workers) -> List[Path]:
    p = model.p
    n = 6 * p
    reps = 1000 if reps is None else validate_count(reps, 'reps')
    loss = builtin_loss("logistic")
    paths = []
    for panel, lam in (("lambda0", 0.0), ("lambda1", 1.0)):
        empirical, used = average_coefficients(model, loss.name, lam, n, reps, seed, workers)
        expected = expected_direction(solve_fixed_point(model, loss, lam, n), model)
        if used < reps:
            logger.warning(f"{name} {panel}: {reps - used} of {reps} fits failed and were skipped")
        rows = [
            {'coordinate': i + 1, 'avg_beta': emp, 'expected': exp}
            for i, (emp, exp) in enumerate(zip(empirical, expected))
        ]
        paths.append(write_table(rows, out_dir / f"{name}_{panel}.csv"))
        paths.append(plotting.plot_coordinates(out_dir / f"{name}_{panel}.svg", empirical, expected,
                                               title=f"lambda={lam:g}, {used} fits"))
    return paths


def fig4(out_dir: Path, reps=None, seed=0, workers=None) -> List[Path]:
    model = build_model(60, "block:sqrt2,sqrt8", "rank1:3,6")
    return _coordinate_figure("fig4", model, out_dir, reps, seed, workers)


def fig5(out_dir: Path, reps=None, seed=0, workers=None) -> List[Path]:
    model = build_model(60, "ones:sqrt2", "scaled:2")
    return _coordinate_figure("fig5", model, out_dir, reps, seed, workers)


def mixing_curve(model: MixtureModel, losses: Tuple[str, str], n: int, seed: int) -> List[dict]:
    """One-shot error of a₁β̂₁ + a₂β̂₂ (λ = 0) along the mixing ratio, with its prediction."""
    data = sample_dataset(model, NoiseLaw.GAUSSIAN, n, seed)
    specs = [builtin_loss(name) for name in losses]
    sols = [solve_erm(data, loss, 0.0) for loss in specs]
    obs_list = [compute_observables(data, sol, loss) for sol, loss in zip(sols, specs)]

    rows = []
    for rho in RHO_GRID:
        weights = mixing_ratio_weights(obs_list, float(rho))
        beta = weights[0] * sols[0].beta + weights[1] * sols[1].beta
        rows.append({
            'rho': float(rho),
            'a1': weights[0],
            'a2': weights[1],
            'err_emp': classification_error(beta, model),
            'err_pred': predicted_combination_error(obs_list, weights, model, 0.0),
        })
    best = optimal_combination(obs_list, sols, model)
    logger.info(f"Optimal {best.label} combination at n={n}: predicted {best.predicted_error:.4f}")
    return rows


def fig6(out_dir: Path, reps=None, seed=0, workers=None) -> List[Path]:
    p = 256
    n = 10 * p
    panels = {
        "fig6_left": (build_model(p, "spike:1", "scaled:2"), ("logistic", "exponential")),
        "fig6_right": (build_model(p, "block:sqrt0.5,-sqrt0.5", "toeplitz:0.1"), ("square", "logistic")),
    }
    paths = []
    for name, (model, losses) in panels.items():
        rows = mixing_curve(model, losses, n, seed)
        paths.append(write_table(rows, out_dir / f"{name}.csv"))
        paths.append(plotting.plot_error_curves(
            out_dir / f"{name}.svg", [r['rho'] for r in rows],
            {"prediction": [r['err_pred'] for r in rows]},
            xlabel="rho", title=" + ".join(losses),
            markers={"empirical": [r['err_emp'] for r in rows]},
        ))
    return paths


def _combination_unit(unit) -> Optional[dict]:
    model, n, seed = unit
    data = sample_dataset(model, NoiseLaw.GAUSSIAN, n, seed)
    specs = [builtin_loss("logistic"), builtin_loss("square_root")]
    try:
        sols = [solve_erm(data, loss, 0.0) for loss in specs]
        obs_list = [compute_observables(data, sol, loss) for sol, loss in zip(sols, specs)]
        best = optimal_combination(obs_list, sols, model)
    except ErmError:
        return None
    return {
        'err_logistic': classification_error(sols[0].beta, model),
        'err_square_root': classification_error(sols[1].beta, model),
        'err_combined': classification_error(best.combined_beta, model),
        'err_combined_pred': best.predicted_error,
    }


def fig7(out_dir: Path, reps=None, seed=0, workers=None) -> List[Path]:
    """Optimal logistic + square-root combination against both singles and least squares."""
    p = 250
    reps = 300 if reps is None else validate_count(reps, 'reps')
    model = build_model(p, "spike:0.6", "identity")
    ratios = np.round(np.arange(7.0, 8.0 + 1e-9, 0.2), 1)

    units = [(model, int(round(r * p)), seed + trial) for r in ratios for trial in range(reps)]
    results = list(map_units(_combination_unit, units, workers))

    rows = []
    for k, ratio in enumerate(ratios):
        n = int(round(ratio * p))
        chunk = [res for res in results[k * reps:(k + 1) * reps] if res is not None]
        row = {'n_over_p': float(ratio), 'n': n, 'trials': len(chunk)}
        for key in ('err_logistic', 'err_square_root', 'err_combined', 'err_combined_pred'):
            row[key] = float(np.mean([res[key] for res in chunk])) if chunk else None
        row['err_ls_theory'] = predicted_error(square_loss_state(model, 0.0, n))
        rows.append(row)

    paths = [write_table(rows, out_dir / "fig7.csv")]
    paths.append(plotting.plot_error_curves(
        out_dir / "fig7.svg", ratios,
        {"least squares (theory)": [r['err_ls_theory'] for r in rows],
         "combined (prediction)": [r['err_combined_pred'] for r in rows]},
        xlabel="n/p", title=f"p={p}",
        markers={key: [r[f'err_{key}'] for r in rows] for key in ('logistic', 'square_root', 'combined')},
    ))
    return paths


FIGURES: Dict[str, Callable[..., List[Path]]] = {
    "fig1": fig1,
    "fig2": fig2,
    "fig3": fig3,
    "fig4": fig4,
    "fig5": fig5,
    "fig6": fig6,
    "fig7": fig7,
}


def reproduce_figure(
    fig_id: str,
    out_dir: Optional[Union[str, Path]] = None,
    reps: Optional[int] = None,
    seed: int = 0,
    workers: Optional[int] = None
) -> List[Path]:
    """
    Write the CSV tables and SVG plots of one figure.

    Args:
        fig_id: One of fig1..fig7
        out_dir: Output directory (default ERM_OUTPUT_DIR/<fig_id>)
        reps: Replication override (figure default otherwise)
        seed: Base seed
        workers: Process count for replicated figures

    Returns:
        Paths of the files written
    """
    fig_id = validate_choice(fig_id, list(FIGURES), field="fig_id")
    if out_dir is None:
        out_dir = settings.output_dir(fig_id) if settings else Path("results") / fig_id
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    logger.info(f"Reproducing {fig_id} into {out_dir}", extra={'fig_id': fig_id, 'seed': seed})
    paths = FIGURES[fig_id](out_dir, reps=reps, seed=seed, workers=workers)
    logger.info(f"{fig_id}: wrote {len(paths)} files", extra={'fig_id': fig_id, 'files': [str(p) for p in paths]})
    return paths
