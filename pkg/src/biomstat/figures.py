"""Matplotlib renderings written next to the delimited report files."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluation import ExperimentResult, SubsetResult
from .similarity import BinnedHistogram


def save_histogram_figure(
    hist: BinnedHistogram, path: str | Path, title: str = "Pairwise biometric similarity"
) -> Path:
    """Bar rendering of the similarity histogram, trimmed to populated bins."""
    path = Path(path)
    counts = hist.counts
    nonzero = counts.nonzero()[0]
    lo_bin = int(nonzero[0]) if nonzero.size else 0
    hi_bin = int(nonzero[-1]) + 1 if nonzero.size else hist.bin_count
    edges = hist.bin_edges()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(
        edges[lo_bin:hi_bin],
        counts[lo_bin:hi_bin],
        width=hist.bin_width,
        align="edge",
        color="#3465a4",
    )
    ax.set_xlabel("cosine similarity")
    ax.set_ylabel("pair count")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_metrics_figure(results: Sequence[ExperimentResult], path: str | Path) -> Path:
    """Grouped bars of Acc/Prec/Recall/F1 per experiment row."""
    path = Path(path)
    names = ["Acc", "Prec", "Recall", "F1"]
    fig, ax = plt.subplots(figsize=(max(6, 1.6 * len(results)), 4))
    width = 0.2
    for j, name in enumerate(names):
        vals = []
        for res in results:
            m = res.metrics
            vals.append([m.accuracy, m.precision, m.recall, m.f1][j] * 100)
        ax.bar([i + (j - 1.5) * width for i in range(len(results))], vals, width, label=name)
    ax.set_xticks(range(len(results)))
    ax.set_xticklabels(
        [str(res.spec.max_frames or "all") for res in results], rotation=0
    )
    ax.set_xlabel("video length (frames)")
    ax.set_ylabel("percent")
    ax.set_ylim(0, 105)
    ax.legend(ncol=4, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_sweep_figure(results: Sequence[ExperimentResult], path: str | Path) -> Path:
    """Accuracy against the video-length cap."""
    path = Path(path)
    xs = [res.spec.max_frames or 0 for res in results]
    ys = [100 * res.metrics.accuracy for res in results]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(xs, ys, "o-", color="#a40000")
    ax.set_xlabel("video length (frames)")
    ax.set_ylabel("balanced accuracy (%)")
    ax.set_ylim(0, 105)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_subset_figure(results: Sequence[SubsetResult], path: str | Path) -> Path:
    """Accuracy by rank over all feature subsets, colored by subset size."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    sc = ax.scatter(
        [res.rank for res in results],
        [100 * res.accuracy for res in results],
        c=[res.n_features for res in results],
        s=8,
        cmap="viridis",
    )
    fig.colorbar(sc, ax=ax, label="features in subset")
    ax.set_xlabel("rank")
    ax.set_ylabel("CV balanced accuracy (%)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
