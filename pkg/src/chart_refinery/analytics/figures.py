"""Matplotlib renderings of the evaluation artifacts.

Uses the object-oriented Figure API directly (no pyplot, no global backend
state) so figures can be written from service worker threads.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from .clustering import ClusteringResult
from .projection import Projection2D

_DPI = 150


def _cluster_colors(k: int) -> np.ndarray:
    cmap = matplotlib.colormaps["tab10" if k <= 10 else "tab20"]
    return np.array([cmap(i % cmap.N) for i in range(k)])


def save_projection_figure(
    path: str | Path,
    projection: Projection2D,
    clustering: ClusteringResult,
    title: str = "Recommendation manifold",
) -> None:
    """Scatter of the 2-D projection colored by cluster assignment."""
    fig = Figure(figsize=(7, 6))
    ax = fig.add_subplot(111)
    colors = _cluster_colors(clustering.k)
    for c in range(clustering.k):
        mask = clustering.assignments == c
        ax.scatter(
            projection.coords[mask, 0],
            projection.coords[mask, 1],
            s=14,
            color=colors[c],
            label=f"cluster {c}",
            alpha=0.75,
            linewidths=0,
        )
    ax.set_title(f"{title} ({projection.method.value}, k={clustering.k})")
    ax.set_xlabel("component 1")
    ax.set_ylabel("component 2")
    ax.legend(loc="best", fontsize=8, markerscale=1.4, framealpha=0.9)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)


def save_db_curve_figure(path: str | Path, curve: list[tuple[int, float]], selected_k: int) -> None:
    """Davies-Bouldin score per k with the selected k highlighted."""
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot(111)
    ks = [k for k, _ in curve]
    scores = [s for _, s in curve]
    ax.plot(ks, scores, marker="o", color="#1f77b4")
    if selected_k in ks:
        best = scores[ks.index(selected_k)]
        ax.scatter([selected_k], [best], s=90, facecolors="none", edgecolors="#d62728",
                   linewidths=2, zorder=3, label=f"selected k={selected_k}")
        ax.legend(fontsize=9)
    ax.set_xlabel("k")
    ax.set_ylabel("Davies-Bouldin score")
    ax.set_title("Cluster count selection")
    ax.set_xticks(ks)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
