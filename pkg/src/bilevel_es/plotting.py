"""Learning-curve plots: per-mode mean line with a +/- 1 std band, SVG output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .errors import ConfigError
from .harness import read_records_csv


def _load_group(csv_paths):
    iterations = None
    curves = []
    for path in csv_paths:
        records = read_records_csv(path)
        its = np.array([r.iteration for r in records])
        if iterations is None:
            iterations = its
        elif its.shape != iterations.shape or np.any(its != iterations):
            raise ConfigError(
                f"{path} has a different iteration grid than the first CSV"
            )
        curves.append(np.array([r.ret for r in records]))
    return iterations, np.stack(curves)


def plot_curves(csv_groups, output_path) -> str:
    """Write a standalone SVG of mean curves with std bands.

    csv_groups maps a label (e.g. mode name) to a list of CSV paths with
    identical iteration grids; a single CSV gives a zero-width band.
    """
    if not csv_groups:
        raise ConfigError("no CSV files given")
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for label, paths in csv_groups.items():
        if not paths:
            raise ConfigError(f"group {label!r} has no CSV files")
        iterations, curves = _load_group(paths)
        mean = curves.mean(axis=0)
        std = curves.std(axis=0)
        ax.plot(iterations, mean, label=label)
        ax.fill_between(iterations, mean - std, mean + std, alpha=0.25)
    ax.set_xlabel("iteration")
    ax.set_ylabel("return")
    ax.legend()
    fig.tight_layout()
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(output_path, format="svg")
    plt.close(fig)
    return str(output_path)
