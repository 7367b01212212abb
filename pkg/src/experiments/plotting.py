"""
Static SVG rendering of experiment outputs.

CSV files are the authoritative artifacts; plots are rendered from the same
arrays with the Agg backend and a fixed hash salt so SVGs are reproducible.
"""

from pathlib import Path
from typing import Dict, Optional, Sequence, Union

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from src.utils.logging import get_logger

logger = get_logger(__name__)

plt.rcParams["svg.hashsalt"] = "erm-asymptotics"


def _save(fig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.debug(f"Wrote plot {path}")
    return path


def plot_error_curves(
    path: Union[str, Path],
    x: Sequence[float],
    curves: Dict[str, Sequence[Optional[float]]],
    xlabel: str,
    title: str = "",
    log_x: bool = False,
    markers: Optional[Dict[str, Sequence[Optional[float]]]] = None
) -> Path:
    """Theory curves as lines, empirical points (if any) as markers."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    x = np.asarray(x, dtype=float)
    for label, values in curves.items():
        ax.plot(x, np.array(values, dtype=float), "-", label=label)
    for label, values in (markers or {}).items():
        ax.plot(x, np.array(values, dtype=float), "o", markersize=4, label=label)
    if log_x:
        ax.set_xscale("log", base=2)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("classification error")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_histogram(
    path: Union[str, Path],
    samples: np.ndarray,
    grid: np.ndarray,
    density: np.ndarray,
    xlabel: str,
    bins: int = 50
) -> Path:
    """Normalized histogram against a theoretical density."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.hist(samples, bins=bins, density=True, alpha=0.5, label="empirical")
    ax.plot(grid, density, "r-", label="theory")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("density")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_coordinates(
    path: Union[str, Path],
    empirical: np.ndarray,
    theoretical: np.ndarray,
    title: str = ""
) -> Path:
    """Coordinate-wise empirical average of β̂ against E[β̃]."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    index = np.arange(1, empirical.size + 1)
    ax.plot(index, empirical, "o", markersize=3, label="average of fitted")
    ax.plot(index, theoretical, "-", label="expected")
    ax.set_xlabel("coordinate")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_summary(
    path: Union[str, Path],
    summary: Sequence[Dict],
    by_lambda: bool,
    title: str = ""
) -> Path:
    """Mean errors from `summarize`, one group of curves per (loss, n) or (loss, λ)."""
    x_key, group_key = ("lambda", "n") if by_lambda else ("n", "lambda")
    groups: Dict[tuple, list] = {}
    for row in summary:
        groups.setdefault((row["loss"], row[group_key]), []).append(row)

    fig, ax = plt.subplots(figsize=(5, 3.5))
    for (loss, value), rows in groups.items():
        rows = sorted(rows, key=lambda r: r[x_key])
        x = [r[x_key] for r in rows]
        label = f"{loss}, {group_key}={value:g}" if len(groups) > 1 else loss
        lines = ax.plot(x, np.array([r["err_theory"] for r in rows], dtype=float), "-",
                        label=f"{label} theory")
        color = lines[0].get_color()
        ax.plot(x, np.array([r["err_stoch"] for r in rows], dtype=float), "--", color=color,
                label=f"{label} stochastic")
        ax.plot(x, np.array([r["err_emp"] for r in rows], dtype=float), "o", color=color,
                markersize=4, label=f"{label} empirical")
    if by_lambda:
        ax.set_xscale("log", base=2)
    ax.set_xlabel(x_key)
    ax.set_ylabel("classification error")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=6)
    return _save(fig, path)
