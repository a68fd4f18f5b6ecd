"""Matplotlib renderings for the reporting path.

Every CLI report keeps JSON/CSV as its primary output; these helpers
render the companion figures next to them when asked to.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .bpe import BpeStats


def plot_merge_length_curves(stats: BpeStats, path: str | Path) -> Path:
    """Average and maximum expansion length against vocabulary size."""
    path = Path(path)
    if not stats.length_curve:
        raise ValueError("no merges to plot")
    sizes = [v for v, _, _ in stats.length_curve]
    averages = [a for _, a, _ in stats.length_curve]
    maxima = [m for _, _, m in stats.length_curve]
    fig, (ax_avg, ax_max) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax_avg.plot(sizes, averages)
    ax_avg.set_xlabel("Vocabulary size")
    ax_avg.set_ylabel("Avg. combined tokens")
    ax_max.plot(sizes, maxima)
    ax_max.set_xlabel("Vocabulary size")
    ax_max.set_ylabel("Max. combined tokens")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_type_composition(stats: BpeStats, path: str | Path, top: int = 12) -> Path:
    """Horizontal bars of the most frequent base-type compositions."""
    path = Path(path)
    if not stats.type_histogram:
        raise ValueError("no type compositions to plot")
    items = sorted(stats.type_histogram.items(), key=lambda kv: -kv[1])[:top]
    labels = [k for k, _ in items][::-1]
    shares = [v for _, v in items][::-1]
    fig, ax = plt.subplots(figsize=(7, 0.35 * len(items) + 1.2))
    ax.barh(labels, shares)
    ax.set_xlabel("Share of learned tokens")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_singular_spectrum(spectrum, path: str | Path, label: str | None = None) -> Path:
    """Normalized singular values on a log-scaled dimension axis."""
    path = Path(path)
    values = list(spectrum)
    if not values:
        raise ValueError("empty spectrum")
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogx(range(1, len(values) + 1), values, label=label)
    ax.set_xlabel("Dimension")
    ax.set_ylabel("Singular value")
    if label:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
