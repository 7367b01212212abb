"""
Structured logging for solvers, trials and tools.
Emits either human-readable lines or one JSON object per record.
"""

import logging
import json
from typing import Any, Optional
from datetime import datetime, timezone

import numpy as np


# LogRecord attributes that are not user-supplied `extra` fields
_RESERVED_ATTRS = frozenset([
    'name', 'msg', 'args', 'created', 'filename', 'funcName',
    'levelname', 'levelno', 'lineno', 'module', 'msecs',
    'message', 'pathname', 'process', 'processName',
    'relativeCreated', 'thread', 'threadName', 'exc_info',
    'exc_text', 'stack_info', 'taskName'
])


class NumpyJSONEncoder(json.JSONEncoder):
    """JSON encoder that understands numpy scalars and arrays."""

    def default(self, o: Any) -> Any:
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, np.bool_):
            return bool(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        return super().default(o)


class WorkerFilter(logging.Filter):
    """Tags records emitted inside process-pool workers with the worker pid."""

    def filter(self, record: logging.LogRecord) -> bool:
        if record.processName != "MainProcess" and not hasattr(record, 'worker'):
            record.worker = record.process
        return True


class StructuredFormatter(logging.Formatter):
    """
    JSON formatter for structured logging.
    Outputs logs in JSON format for easy parsing.
    """

    def format(self, record: logging.LogRecord) -> str:
        """
        Format log record as JSON.

        Args:
            record: Log record to format

        Returns:
            JSON-formatted log string
        """
        log_data = {
            'timestamp': datetime.now(timezone.utc).isoformat(),
            'level': record.levelname,
            'logger': record.name,
            'message': record.getMessage(),
        }

        if record.exc_info:
            log_data['exception'] = self.formatException(record.exc_info)

        for key, value in record.__dict__.items():
            if key not in _RESERVED_ATTRS:
                log_data[key] = value

        return json.dumps(log_data, cls=NumpyJSONEncoder)


def setup_logger(
    name: str,
    level: str = "INFO",
    structured: bool = False
) -> logging.Logger:
    """
    Set up a logger with a single console handler.

    Args:
        name: Logger name
        level: Log level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        structured: Whether to use JSON structured logging

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(name)
    logger.setLevel(getattr(logging, level.upper(), logging.INFO))

    logger.handlers.clear()

    handler = logging.StreamHandler()
    handler.setLevel(getattr(logging, level.upper(), logging.INFO))
    handler.addFilter(WorkerFilter())

    if structured:
        formatter = StructuredFormatter()
    else:
        formatter = logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        )

    handler.setFormatter(formatter)
    logger.addHandler(handler)

    return logger


def get_logger(name: str) -> logging.Logger:
    """
    Get or create a logger.

    Args:
        name: Logger name (typically __name__)

    Returns:
        Logger instance
    """
    return logging.getLogger(name)


def log_solver_run(
    logger: logging.Logger,
    solver: str,
    duration_ms: float,
    success: bool,
    iterations: Optional[int] = None,
    residual: Optional[float] = None,
    error: Optional[str] = None
):
    """
    Log a numerical solver run with structured data.

    Args:
        logger: Logger instance
        solver: Solver name (e.g. "newton[logistic]", "fixed_point[square]")
        duration_ms: Run time in milliseconds
        success: Whether the solver converged
        iterations: Iterations used
        residual: Final residual
        error: Error message if the run failed
    """
    log_data = {
        'solver': solver,
        'duration_ms': round(duration_ms, 2),
        'success': success,
    }

    if iterations is not None:
        log_data['iterations'] = iterations

    if residual is not None:
        log_data['residual'] = float(residual)

    if error:
        log_data['error'] = error

    if success:
        logger.debug(
            f"Solver '{solver}' converged in {iterations} iterations ({duration_ms:.2f}ms)",
            extra=log_data
        )
    else:
        logger.warning(
            f"Solver '{solver}' failed after {duration_ms:.2f}ms: {error}",
            extra=log_data
        )


def log_trial(
    logger: logging.Logger,
    trial: int,
    seed: int,
    loss: str,
    lam: float,
    n: int,
    duration_ms: float,
    status: str
):
    """
    Log one Monte Carlo trial.

    Args:
        logger: Logger instance
        trial: Trial index
        seed: Seed used for sampling
        loss: Loss name
        lam: Regularization strength
        n: Sample count
        duration_ms: Fit plus observables time in milliseconds
        status: "ok" or the failure status recorded in the CSV
    """
    log_data = {
        'trial': trial,
        'seed': seed,
        'loss': loss,
        'lambda': lam,
        'n': n,
        'duration_ms': round(duration_ms, 2),
        'status': status,
    }

    if status == "ok":
        logger.debug(
            f"Trial {trial} ({loss}, lambda={lam:g}, n={n}) done in {duration_ms:.2f}ms",
            extra=log_data
        )
    else:
        logger.warning(
            f"Trial {trial} ({loss}, lambda={lam:g}, n={n}) recorded as {status}",
            extra=log_data
        )


app_logger = None

def init_app_logger(log_level: str = "INFO", structured: bool = False):
    """
    Initialize the application-wide logger.

    Args:
        log_level: Log level to use
        structured: Whether to use JSON structured logging
    """
    global app_logger
    app_logger = setup_logger("src", log_level, structured)
    return app_logger
