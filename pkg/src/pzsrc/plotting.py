"""Report figures rendered straight to files (no display needed)."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

# PNG metadata would otherwise carry the matplotlib version string
_META = {"Software": None}


def _save(fig: Figure, path) -> Path:
    FigureCanvasAgg(fig)
    path = Path(path)
    fig.savefig(path, dpi=100, metadata=_META)
    return path


def confusion_figure(report, path, title: str = "") -> Path:
    """Heatmap of the confusion matrix with counts and per-class accuracy."""
    conf = np.asarray(report.confusion)
    K = conf.shape[0]
    fig = Figure(figsize=(1.2 * K + 2.5, 1.0 * K + 1.8))
    ax = fig.add_subplot(1, 1, 1)
    ax.imshow(conf, cmap="Blues", vmin=0)
    ax.set_xticks(range(K), labels=report.class_ids)
    ax.set_yticks(range(K), labels=[f"{c}\n{w:.2f}%" for c, w in zip(report.class_ids, report.omega_k)])
    ax.set_xlabel("predicted")
    ax.set_ylabel("truth")
    hi = conf.max() if conf.size else 0
    for i in range(K):
        for j in range(K):
            ax.text(j, i, str(conf[i, j]), ha="center", va="center",
                    color="white" if conf[i, j] > hi / 2 else "black")
    ax.set_title(title or f"mean accuracy {report.omega:.2f}%")
    fig.tight_layout()
    return _save(fig, path)


def correlation_figure(tables: Mapping[str, np.ndarray], references: Sequence[int], path,
                       title: str = "") -> Path:
    """One panel per space (e.g. moment vs pixel), one curve per reference column."""
    fig = Figure(figsize=(7, 2.6 * len(tables)))
    for k, (space, table) in enumerate(tables.items()):
        ax = fig.add_subplot(len(tables), 1, k + 1)
        for ref, row in zip(references, table):
            ax.plot(np.arange(row.size), row, lw=1, label=f"ref {ref}")
        ax.set_ylabel(f"correlation ({space})")
        ax.grid(alpha=0.3)
        ax.legend(fontsize="small", loc="lower right")
    ax.set_xlabel("column index")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    return _save(fig, path)


def sweep_figure(values, omegas, path, xlabel: str = "value") -> Path:
    fig = Figure(figsize=(5, 3.2))
    ax = fig.add_subplot(1, 1, 1)
    ax.plot(values, omegas, "o-")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("mean accuracy (%)")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)
