"""Matplotlib renderings of the report CSVs.

Each renderer takes the in-memory report object and writes a PNG next to
the delimited output the CLI already emits. Rendering stays out of the
evaluation code paths; nothing here feeds back into metrics.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .clustering import PurityReport
from .embeddings import EmbeddingMatrix
from .evaluation import CorrelationReport


def plot_scatter2d(m: EmbeddingMatrix, domains: Sequence[str], out_path: str | Path,
                   clusters: Optional[Sequence[int]] = None, title: str = "") -> Path:
    """Scatter of 2-component projections colored by domain (or by cluster)."""
    if m.dim != 2:
        raise ValueError(f"scatter needs 2 components, got {m.dim}")
    out_path = Path(out_path)
    fig, ax = plt.subplots(figsize=(7, 6))
    keys = [str(c) for c in clusters] if clusters is not None else list(domains)
    order = sorted(set(keys))
    cmap = plt.get_cmap("tab10")
    for i, key in enumerate(order):
        mask = np.array([k == key for k in keys])
        ax.scatter(m.data[mask, 0], m.data[mask, 1], s=6, alpha=0.6,
                   color=cmap(i % 10), label=key)
    ax.legend(markerscale=2, fontsize=8)
    ax.set_xlabel("component 1")
    ax.set_ylabel("component 2")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def plot_confusion(report: PurityReport, out_path: str | Path) -> Path:
    """Heatmap of the true-domain vs. assigned-domain counts."""
    out_path = Path(out_path)
    n = len(report.domains)
    fig, ax = plt.subplots(figsize=(1.2 * n + 2, 1.0 * n + 2))
    im = ax.imshow(report.confusion, cmap="Blues")
    ax.set_xticks(range(n), report.domains, rotation=45, ha="right")
    ax.set_yticks(range(n), report.domains)
    ax.set_xlabel("assigned domain")
    ax.set_ylabel("true domain")
    vmax = report.confusion.max() if report.confusion.size else 0
    for i in range(n):
        for j in range(n):
            v = report.confusion[i, j]
            ax.text(j, i, str(v), ha="center", va="center",
                    color="white" if vmax and v > 0.5 * vmax else "black",
                    fontsize=8)
    fig.colorbar(im, ax=ax, shrink=0.8)
    ax.set_title(f"purity = {report.purity:.4f}")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def plot_correlation(report: CorrelationReport, out_path: str | Path) -> Path:
    """Centroid cosine vs. BLEU scatter with the Pearson r in the title."""
    out_path = Path(out_path)
    xs = [p[2] for p in report.pairs]
    ys = [p[3] for p in report.pairs]
    fig, ax = plt.subplots(figsize=(6, 5))
    ax.scatter(xs, ys, s=25, color="tab:blue")
    for a, b, x, y in report.pairs:
        ax.annotate(f"{a}→{b}", (x, y), fontsize=6, alpha=0.7,
                    xytext=(3, 3), textcoords="offset points")
    ax.set_xlabel("centroid cosine similarity")
    ax.set_ylabel("BLEU")
    ax.set_title(f"Pearson r = {report.pearson_r:.3f}")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
