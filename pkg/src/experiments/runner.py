"""
Monte Carlo experiment runner.

Work is split into units (trial, n): one dataset is sampled per unit and
every (loss, λ) pair is fitted on it. Units run on a bounded process pool;
results come back in submission order and funnel through one CSV sink, so
the output does not depend on the worker count.
"""

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union, Any

import numpy as np

from src.config import config as settings
from src.models import TrialRecord, MixtureModel, NoiseLaw, TheoryState
from src.experiments.config import ExperimentConfig
from src.services.losses import builtin_loss
from src.services.mixture_model import sample_dataset, classification_error
from src.services.erm_solver import solve_erm
from src.services.empirical_observables import compute_observables, stochastic_error_prediction
from src.services.theory_engine import solve_fixed_point, predicted_error
from src.utils.errors import ErmError, IllPosedProblemError
from src.utils.logging import get_logger, log_trial

logger = get_logger(__name__)


def default_workers() -> int:
    return settings.ERM_WORKERS if settings else 1


def map_units(func: Callable, units: Sequence, workers: Optional[int] = None) -> Iterator:
    """Apply func to each unit, in order, on up to `workers` processes."""
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(units) <= 1:
        for unit in units:
            yield func(unit)
        return
    with ProcessPoolExecutor(max_workers=min(workers, len(units))) as pool:
        yield from pool.map(func, units)


def _format(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value)) if np.isfinite(value) else ""
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


class CsvSink:
    """Ordered CSV writer for trial records."""

    def __init__(self, path: Optional[Union[str, Path]]):
        self.path = Path(path) if path else None
        self._fh = None
        self._writer = None

    def __enter__(self):
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = self.path.open("w", newline="")
            self._writer = csv.writer(self._fh, lineterminator="\n")
            self._writer.writerow(TrialRecord.CSV_COLUMNS)
        return self

    def write(self, records: Iterable[TrialRecord]):
        if self._writer is None:
            return
        for record in records:
            self._writer.writerow([_format(v) for v in record.as_row()])
        self._fh.flush()

    def __exit__(self, *exc):
        if self._fh:
            self._fh.close()
        return False


def write_records(records: Iterable[TrialRecord], path: Union[str, Path]) -> Path:
    """Write records to CSV in the given order."""
    with CsvSink(path) as sink:
        sink.write(records)
    return Path(path)


def write_table(rows: Sequence[Dict[str, Any]], path: Union[str, Path]) -> Path:
    """Write dict rows (keys of the first row as header) with the record formatting."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if rows:
            header = list(rows[0])
            writer.writerow(header)
            for row in rows:
                writer.writerow([_format(row.get(key)) for key in header])
    return path


def theory_table(
    model: MixtureModel,
    losses: Sequence[str],
    lambdas: Sequence[float],
    sample_sizes: Sequence[int]
) -> Dict[Tuple[str, float, int], Optional[TheoryState]]:
    """Deterministic predictions once per grid point (None where unavailable)."""
    table = {}
    for name in losses:
        loss = builtin_loss(name)
        for n in sample_sizes:
            warm = None
            for lam in sorted(set(lambdas), reverse=True):
                try:
                    warm = solve_fixed_point(model, loss, lam, n, init=warm)
                    table[(name, lam, n)] = warm
                except ErmError as e:
                    logger.warning(f"No theory for {name} at lambda={lam:g}, n={n}: {e.message}")
                    table[(name, lam, n)] = None
    return table


def _run_unit(unit: Tuple) -> List[TrialRecord]:
    (trial, seed, n, model, noise, losses, lambdas, theory, record_timing) = unit
    data = sample_dataset(model, NoiseLaw(noise), n, seed)
    records = []
    for name in losses:
        loss = builtin_loss(name)
        warm = None
        for lam in lambdas:
            start = time.perf_counter()
            state = theory.get((name, lam, n))
            fields = dict(trial=trial, seed=seed, loss=name, lam=lam, n=n, p=model.p)
            if state is not None:
                fields.update(err_theory=predicted_error(state), theta=state.theta, eta=state.eta,
                              gamma=state.gamma, kappa=state.kappa)
            try:
                sol = solve_erm(data, loss, lam, beta0=warm)
                warm = sol.beta
                obs = compute_observables(data, sol, loss)
                fields.update(
                    err_emp=classification_error(sol.beta, model),
                    err_stoch=stochastic_error_prediction(obs, model, lam),
                    theta_hat=obs.theta_hat, eta_hat=obs.eta_hat,
                    gamma_hat=obs.gamma_hat, kappa_hat=obs.kappa_hat,
                )
                status = "ok"
            except IllPosedProblemError:
                status = "ill_posed"
            except ErmError:
                status = "numerical_failure"
            duration_ms = (time.perf_counter() - start) * 1000
            log_trial(logger, trial, seed, name, lam, n, duration_ms, status)
            records.append(TrialRecord(status=status, ms=round(duration_ms, 3) if record_timing else 0.0,
                                       **fields))
    return records


def run_experiment(
    config: ExperimentConfig,
    workers: Optional[int] = None,
    csv_path: Optional[Union[str, Path]] = None
) -> List[TrialRecord]:
    """
    Run every (trial, n, loss, λ) combination of a configuration.

    Args:
        config: Validated experiment configuration
        workers: Process count (1 runs serially; default ERM_WORKERS)
        csv_path: Override of config.outputs.csv

    Returns:
        Trial records in deterministic order (n-grid inner to trials; losses
        and λ in configuration order)
    """
    model = config.build_model()
    sizes = config.sample_sizes
    lambdas = [float(v) for v in config.lambdas]
    theory = theory_table(model, config.losses, lambdas, sizes) if config.theory else {}

    units = [
        (trial, config.base_seed + trial, n, model, config.noise_law.value, tuple(config.losses),
         tuple(lambdas), theory, config.record_timing)
        for trial in range(config.replications)
        for n in sizes
    ]
    logger.info(
        f"Running experiment '{config.name}': {len(units)} units, "
        f"{len(config.losses)} losses x {len(lambdas)} lambdas",
        extra={'experiment': config.name, 'units': len(units), 'p': config.p}
    )

    start = time.perf_counter()
    records: List[TrialRecord] = []
    with CsvSink(csv_path or config.outputs.csv) as sink:
        for batch in map_units(_run_unit, units, workers):
            sink.write(batch)
            records.extend(batch)

    failed = sum(r.status != "ok" for r in records)
    logger.info(
        f"Experiment '{config.name}' finished: {len(records)} records, {failed} failed",
        extra={'experiment': config.name, 'records': len(records), 'failed': failed,
               'duration_ms': round((time.perf_counter() - start) * 1000, 2)}
    )
    return records


def summarize(records: Iterable[TrialRecord]) -> List[Dict[str, Any]]:
    """Mean errors per (loss, λ, n) over successful trials, in first-seen order."""
    groups: Dict[Tuple[str, float, int], List[TrialRecord]] = {}
    for record in records:
        groups.setdefault((record.loss, record.lam, record.n), []).append(record)

    def mean(values):
        values = [v for v in values if v is not None]
        return float(np.mean(values)) if values else None

    summary = []
    for (loss, lam, n), group in groups.items():
        ok = [r for r in group if r.status == "ok"]
        summary.append({
            'loss': loss,
            'lambda': lam,
            'n': n,
            'trials': len(ok),
            'err_emp': mean(r.err_emp for r in ok),
            'err_stoch': mean(r.err_stoch for r in ok),
            'err_theory': group[0].err_theory,
        })
    return summary
