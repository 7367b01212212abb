"""Tests for experiment configuration, the Monte Carlo runner and figures."""

import csv
import math
from pathlib import Path

import numpy as np
import pytest

from src.experiments.config import (
    parse_number,
    build_mean,
    build_model,
    config_from_dict,
    load_config
)
from src.experiments.runner import run_experiment, summarize, write_records, write_table
from src.experiments.plotting import plot_summary
from src.experiments.figures import (
    SWEEPS,
    HISTOGRAM_SETUP,
    sweep_config,
    reproduce_figure,
    average_coefficients,
    fig3
)
from src.models import TrialRecord
from src.utils.errors import ConfigurationError, InvalidParamsError

CONFIGS_DIR = Path(__file__).resolve().parent.parent / "configs"

SMALL = dict(
    name="small",
    p=20,
    mu="ones:sqrt2",
    cov="toeplitz:0.2",
    losses=["logistic", "square"],
    lambdas=[0.5, 0.1],
    n_values=[60, 80],
    replications=3,
    base_seed=7,
)


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_parse_number():
    assert parse_number("1.5") == 1.5
    assert parse_number("sqrt2") == pytest.approx(math.sqrt(2.0))
    assert parse_number("-sqrt0.5") == pytest.approx(-math.sqrt(0.5))
    assert parse_number("sqrt(8)") == pytest.approx(math.sqrt(8.0))
    with pytest.raises(ConfigurationError):
        parse_number("two")


def test_mean_patterns():
    assert build_mean("ones:sqrt2", 50) @ build_mean("ones:sqrt2", 50) == pytest.approx(2.0)
    mu = build_mean("block:1,2", 4)
    np.testing.assert_allclose(mu, [0.5, 0.5, 1.0, 1.0])
    spike = build_mean("spike:0.6", 5)
    assert spike[0] == 0.6 and not spike[1:].any()
    assert not build_mean("zero", 3).any()
    with pytest.raises(ConfigurationError):
        build_mean("block:1", 4)
    with pytest.raises(ConfigurationError):
        build_mean("gaussian", 4)


def test_covariance_patterns():
    model = build_model(300, "ones", "rank1:1,6")
    assert model.cov_eigvals.max() == pytest.approx(4.0, rel=1e-10)
    assert model.cov_eigvals.min() == pytest.approx(1.0, rel=1e-10)
    assert "symmetrized" not in model.description

    skew = build_model(10, "ones", "rank1:3,6", cov_left="block:1,0", cov_right="block:0,1")
    np.testing.assert_allclose(skew.covariance, skew.covariance.T, atol=1e-14)
    assert "symmetrized" in skew.description

    toeplitz = build_model(5, "ones", "toeplitz:0.5")
    assert toeplitz.covariance[0, 2] == pytest.approx(0.25)
    assert build_model(5, "ones", "scaled:2").cov_eigvals == pytest.approx(np.full(5, 2.0))

    with pytest.raises(ConfigurationError):
        build_model(5, "ones", "rank1:6")
    with pytest.raises(ConfigurationError):
        build_model(5, "ones", "toeplitz:2")
    with pytest.raises(ConfigurationError):
        build_model(5, "ones", "banded:3")


def test_matrix_from_csv(tmp_path):
    path = tmp_path / "cov.csv"
    path.write_text("2,0\n0,3\n")
    model = build_model(2, "ones", f"csv:{path}")
    np.testing.assert_allclose(model.covariance, np.diag([2.0, 3.0]), atol=1e-14)
    with pytest.raises(ConfigurationError):
        build_model(3, "ones", f"csv:{path}")


def test_config_validation_errors():
    config = config_from_dict(dict(SMALL, n_values=None, n_over_p=[3.0, 4.5]))
    assert config.sample_sizes == [60, 90]
    assert config.losses == ["logistic", "square"]

    bad = [
        dict(SMALL, losses=["hinge"]),
        dict(SMALL, lambdas=[-1.0]),
        dict(SMALL, n_values=None),
        dict(SMALL, noise="cauchy"),
        dict(SMALL, replications=0),
        dict(SMALL, p=0),
    ]
    for raw in bad:
        with pytest.raises(ConfigurationError) as exc:
            config_from_dict(raw)
        assert exc.value.exit_code == 2


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "missing.toml")
    broken = tmp_path / "broken.toml"
    broken.write_text("p = [\n")
    with pytest.raises(ConfigurationError):
        load_config(broken)


def test_shipped_configs_load():
    paths = sorted(CONFIGS_DIR.glob("*.toml"))
    assert paths
    for path in paths:
        config = load_config(path)
        config.build_model()
        if config.name in SWEEPS:
            expected = sweep_config(config.name)
            assert config.p == expected.p
            assert config.mu == expected.mu
            assert config.cov == expected.cov
            assert config.losses == expected.losses
            assert config.lambdas == pytest.approx(expected.lambdas)
            assert config.sample_sizes == expected.sample_sizes
            assert config.replications == expected.replications


def test_run_experiment_records(tmp_path):
    config = config_from_dict(SMALL)
    path = tmp_path / "run.csv"
    records = run_experiment(config, workers=1, csv_path=path)
    assert len(records) == 3 * 2 * 2 * 2
    assert [(r.trial, r.n) for r in records[:4]] == [(0, 60)] * 4
    assert records[0].seed == 7
    assert all(r.status == "ok" for r in records)
    assert all(r.ms == 0.0 for r in records)

    rows = _read(path)
    assert rows[0] == list(TrialRecord.CSV_COLUMNS)
    assert rows[0][:6] == ["trial", "seed", "loss", "lambda", "n", "p"]
    assert len(rows) == len(records) + 1

    square = [r for r in records if r.loss == "square"]
    assert all(r.theta_hat == pytest.approx(1.0 / (1.0 + r.kappa_hat), rel=1e-8) for r in square)
    assert all(r.err_theory is not None for r in records)


def test_run_experiment_is_deterministic(tmp_path):
    config = config_from_dict(SMALL)
    run_experiment(config, workers=1, csv_path=tmp_path / "a.csv")
    run_experiment(config, workers=1, csv_path=tmp_path / "b.csv")
    run_experiment(config, workers=2, csv_path=tmp_path / "c.csv")
    first = (tmp_path / "a.csv").read_bytes()
    assert first == (tmp_path / "b.csv").read_bytes()
    assert first == (tmp_path / "c.csv").read_bytes()


def test_ill_posed_grid_points_are_recorded(tmp_path):
    config = config_from_dict(dict(SMALL, lambdas=[0.5, 0.0], n_values=[15], replications=1))
    records = run_experiment(config, workers=1, csv_path=tmp_path / "run.csv")
    unregularized = [r for r in records if r.lam == 0.0]
    assert {r.status for r in unregularized} == {"ill_posed"}
    assert all(r.err_emp is None and r.err_theory is None for r in unregularized)
    assert all(r.status == "ok" for r in records if r.lam > 0)

    rows = _read(tmp_path / "run.csv")
    header = rows[0]
    failed = [dict(zip(header, row)) for row in rows[1:] if row[header.index("status")] == "ill_posed"]
    assert failed and all(row["err_emp"] == "" for row in failed)


def test_summarize_and_tables(tmp_path):
    records = run_experiment(config_from_dict(SMALL), workers=1)
    summary = summarize(records)
    assert len(summary) == 2 * 2 * 2
    assert summary[0]['trials'] == 3
    assert 0.0 < summary[0]['err_emp'] < 0.5

    path = write_table(summary, tmp_path / "summary.csv")
    rows = _read(path)
    assert rows[0] == ['loss', 'lambda', 'n', 'trials', 'err_emp', 'err_stoch', 'err_theory']
    assert write_records(records, tmp_path / "again.csv").exists()

    svg = plot_summary(tmp_path / "summary.svg", summary, by_lambda=False, title="small")
    assert svg.read_text().lstrip().startswith("<?xml")


def test_float_formatting_round_trips(tmp_path):
    records = run_experiment(config_from_dict(dict(SMALL, replications=1)), workers=1)
    path = write_records(records, tmp_path / "run.csv")
    rows = _read(path)
    header = rows[0]
    assert float(rows[1][header.index("err_emp")]) == records[0].err_emp
    assert "np.float64" not in path.read_text()


def test_unknown_figure_id(tmp_path):
    with pytest.raises(InvalidParamsError) as exc:
        reproduce_figure("fig9", out_dir=tmp_path)
    assert exc.value.exit_code == 2


def test_fig3_writes_normalized_histograms(tmp_path):
    paths = reproduce_figure("fig3", out_dir=tmp_path, seed=3)
    names = {p.name for p in paths}
    assert {"fig3_r_hist.csv", "fig3_c_hist.csv", "fig3_samples.csv", "fig3_r.svg", "fig3_c.svg"} <= names
    for name in ("fig3_r_hist.csv", "fig3_c_hist.csv"):
        rows = _read(tmp_path / name)
        assert rows[0] == ["bin_left", "bin_right", "empirical_density", "theory_density"]
        mass = sum((float(r[1]) - float(r[0])) * float(r[2]) for r in rows[1:])
        assert mass == pytest.approx(1.0, abs=1e-3)
        assert len(rows) == 1 + HISTOGRAM_SETUP.outputs.histogram_bins
    assert (tmp_path / "fig3_r.svg").read_text().lstrip().startswith("<?xml")


def test_fig3_bin_count_override(tmp_path):
    fig3(tmp_path, seed=3, bins=20)
    assert len(_read(tmp_path / "fig3_r_hist.csv")) == 21
    with pytest.raises(InvalidParamsError):
        fig3(tmp_path, bins=1)


def test_coordinate_average_shape():
    model = build_model(10, "ones:sqrt2", "scaled:2")
    mean, used = average_coefficients(model, "logistic", 1.0, 60, reps=4, seed=1, workers=1)
    assert mean.shape == (10,)
    assert used == 4
