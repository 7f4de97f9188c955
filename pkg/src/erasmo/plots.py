"""Figure rendering for the report path (headless Agg backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_projection_figure(coords, labels, title: str, path) -> None:
    """Scatter of 2-D projected embeddings colored by cluster label."""
    coords = np.asarray(coords)
    labels = np.asarray(labels)
    fig, ax = plt.subplots(figsize=(6, 5), dpi=120)
    for label in np.unique(labels):
        mask = labels == label
        ax.scatter(coords[mask, 0], coords[mask, 1], s=14, label=f"cluster {label}")
    ax.set_title(title)
    ax.set_xlabel("component 1")
    ax.set_ylabel("component 2")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_sweep_figure(sweeps: dict[str, list[tuple[int, float]]], title: str, path) -> None:
    """Silhouette score against k, one line per algorithm."""
    fig, ax = plt.subplots(figsize=(6, 4), dpi=120)
    for name, pairs in sweeps.items():
        ks = [k for k, _ in pairs]
        scores = [s for _, s in pairs]
        ax.plot(ks, scores, marker="o", label=name)
    ax.set_title(title)
    ax.set_xlabel("k")
    ax.set_ylabel("silhouette score")
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
