"""Tests for the error, validation, logging and configuration utilities."""

import json
import logging

import numpy as np
import pytest

from src.config import Config
from src.utils.errors import (
    ErmError,
    ConfigurationError,
    ConvergenceError,
    InvalidParamsError,
    IllPosedProblemError,
    UnknownLossError,
    format_success_response
)
from src.utils.validators import (
    validate_positive,
    validate_nonnegative,
    validate_count,
    validate_finite_array,
    validate_labels,
    validate_choice,
    validate_grid
)
from src.utils.logging import StructuredFormatter, WorkerFilter, setup_logger, log_trial


def test_error_to_dict():
    error = ConvergenceError("newton[logistic]", 500, residuals={'grad_norm': 1e-3})
    payload = error.to_dict(request_id="req-1")
    assert payload['jsonrpc'] == "2.0"
    assert payload['id'] == "req-1"
    assert payload['error']['code'] == ErmError.CONVERGENCE_FAILURE
    assert payload['error']['data']['iterations'] == 500
    assert 'timestamp' in payload['error']['data']


def test_exit_codes():
    assert InvalidParamsError("bad").exit_code == 2
    assert ConfigurationError("bad").exit_code == 2
    assert UnknownLossError("hinge", ["logistic"]).exit_code == 2
    assert IllPosedProblemError("n <= p").exit_code == 3
    assert ConvergenceError("fixed_point[square]", 10).exit_code == 3


def test_success_response():
    assert format_success_response({'x': 1}, "7") == {"jsonrpc": "2.0", "result": {'x': 1}, "id": "7"}


def test_scalar_validators():
    assert validate_positive(2, 'x') == 2.0
    assert validate_nonnegative(0, 'x') == 0.0
    assert validate_count(5, 'n') == 5
    assert validate_count(5.0, 'n') == 5
    for bad in (0.0, -1.0, float('nan'), float('inf')):
        with pytest.raises(InvalidParamsError):
            validate_positive(bad, 'x')
    with pytest.raises(InvalidParamsError):
        validate_nonnegative(-1e-12, 'x')
    with pytest.raises(InvalidParamsError) as exc:
        validate_count(2.5, 'n')
    assert exc.value.data['field'] == 'n'
    with pytest.raises(InvalidParamsError):
        validate_count(True, 'n')


def test_array_validators():
    assert validate_finite_array([[1, 2]], 'X', ndim=2).dtype == float
    with pytest.raises(InvalidParamsError):
        validate_finite_array([1, 2], 'X', ndim=2)
    np.testing.assert_array_equal(validate_labels([1, -1, 1]), [1.0, -1.0, 1.0])
    with pytest.raises(InvalidParamsError) as exc:
        validate_labels([1, -1, 0.5])
    assert exc.value.data['first_invalid_index'] == 2


def test_choice_and_grid_validators():
    assert validate_choice(" Fit ", ["fit", "combine"]) == "fit"
    with pytest.raises(InvalidParamsError):
        validate_choice("", ["fit"])
    with pytest.raises(InvalidParamsError):
        validate_choice("plot", ["fit"])
    assert validate_grid([0, 1.5], 'lambdas') == [0.0, 1.5]
    with pytest.raises(InvalidParamsError):
        validate_grid([], 'lambdas')
    with pytest.raises(InvalidParamsError):
        validate_grid([0.0], 'lambdas', allow_zero=False)


def test_structured_formatter_serializes_numpy_extras():
    record = logging.LogRecord("src.test", logging.INFO, __file__, 1, "fitted", None, None)
    record.beta = np.array([1.0, 2.0])
    record.iterations = np.int64(7)
    payload = json.loads(StructuredFormatter().format(record))
    assert payload['message'] == "fitted"
    assert payload['level'] == "INFO"
    assert payload['beta'] == [1.0, 2.0]
    assert payload['iterations'] == 7


def test_worker_filter_tags_pool_records():
    record = logging.LogRecord("src.test", logging.INFO, __file__, 1, "trial", None, None)
    record.processName = "SpawnProcess-2"
    record.process = 4242
    assert WorkerFilter().filter(record)
    assert json.loads(StructuredFormatter().format(record))['worker'] == 4242

    main = logging.LogRecord("src.test", logging.INFO, __file__, 1, "trial", None, None)
    main.processName = "MainProcess"
    WorkerFilter().filter(main)
    assert not hasattr(main, 'worker')


def test_log_trial_levels(caplog):
    logger = setup_logger("src.test_trials", "DEBUG")
    logger.propagate = True
    with caplog.at_level(logging.DEBUG, logger="src.test_trials"):
        log_trial(logger, 0, 11, "logistic", 0.5, 100, 1.5, "ok")
        log_trial(logger, 1, 12, "logistic", 0.0, 10, 0.2, "ill_posed")
    levels = [r.levelname for r in caplog.records]
    assert levels == ["DEBUG", "WARNING"]
    assert caplog.records[1].status == "ill_posed"


def test_config_defaults(monkeypatch):
    for key in ("ERM_WORKERS", "THEORY_DAMPING", "QUADRATURE_NODES", "ERM_SOLVER_TOL"):
        monkeypatch.delenv(key, raising=False)
    config = Config()
    assert config.QUADRATURE_NODES == 127
    assert config.THEORY_DAMPING == 0.5
    assert config.ERM_SOLVER_TOL == 1e-9
    assert config.ERM_WORKERS >= 1


def test_config_output_dir(monkeypatch, tmp_path):
    monkeypatch.setenv("ERM_OUTPUT_DIR", str(tmp_path / "results"))
    path = Config().output_dir("fig3")
    assert path == tmp_path / "results" / "fig3"
    assert path.is_dir()


@pytest.mark.parametrize("key,value", [
    ("THEORY_DAMPING", "1.5"),
    ("ERM_WORKERS", "0"),
    ("QUADRATURE_NODES", "many"),
    ("ERM_SOLVER_TOL", "tight"),
])
def test_config_rejects_bad_environment(monkeypatch, key, value):
    monkeypatch.setenv(key, value)
    with pytest.raises(ConfigurationError):
        Config()
