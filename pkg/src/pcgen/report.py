"""Figure rendering for the report path: point-cloud scatter panels and
training-loss curves, written as PNG files next to the CSV outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_VIEWS = (("x", "y", 0, 1), ("x", "z", 0, 2), ("y", "z", 1, 2))


def render_cloud(points, path, title=None):
    """Three orthographic scatter projections of one cloud."""
    points = np.asarray(points, dtype=np.float64)
    fig, axes = plt.subplots(1, 3, figsize=(9, 3.2))
    lim = max(1.0, float(np.abs(points).max()) * 1.05)
    for ax, (nx, ny, i, j) in zip(axes, _VIEWS):
        ax.scatter(points[:, i], points[:, j], s=2, alpha=0.6, linewidths=0)
        ax.set_xlabel(nx)
        ax.set_ylabel(ny)
        ax.set_xlim(-lim, lim)
        ax.set_ylim(-lim, lim)
        ax.set_aspect("equal")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_cloud_grid(clouds, path, titles=None, max_cols=4):
    """One x/y projection per cloud, arranged on a grid."""
    n = len(clouds)
    cols = min(max_cols, n)
    rows = (n + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(2.6 * cols, 2.6 * rows), squeeze=False)
    for k in range(rows * cols):
        ax = axes[k // cols][k % cols]
        if k >= n:
            ax.axis("off")
            continue
        pts = np.asarray(clouds[k])
        ax.scatter(pts[:, 0], pts[:, 1], s=2, alpha=0.6, linewidths=0)
        ax.set_aspect("equal")
        ax.set_xticks([])
        ax.set_yticks([])
        if titles:
            ax.set_title(titles[k], fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_loss_curves(log_csv_path, path):
    """Per-epoch mean loss components from a training log CSV."""
    rows = np.genfromtxt(log_csv_path, delimiter=",", names=True)
    rows = np.atleast_1d(rows)
    epochs = np.unique(rows["epoch"])
    fig, ax = plt.subplots(figsize=(6, 4))
    for key, label in (("l_fm", "flow matching"), ("l_cd", "chamfer"), ("l_total", "total")):
        means = [rows[key][rows["epoch"] == e].mean() for e in epochs]
        ax.plot(epochs, means, label=label)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean batch loss")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_metric_bars(report_rows, path):
    """Bar chart of the scalar metrics in a report."""
    keys = [k for k, v in report_rows if isinstance(v, float)]
    vals = [v for _, v in report_rows if isinstance(v, float)]
    fig, ax = plt.subplots(figsize=(1.2 * max(4, len(keys)), 3.5))
    ax.bar(range(len(keys)), vals)
    ax.set_xticks(range(len(keys)), keys, rotation=30, ha="right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
