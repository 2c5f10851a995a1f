"""Figure rendering for the CLI report path.

Every plot lands next to its CSV twin as a PNG.  Rendering is pinned to
the Agg backend with fixed metadata so a rerun with the same inputs is
byte-identical.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "save_learning_curve",
    "save_band",
    "save_diagnostic",
    "save_cv_box",
    "save_gmse_box",
]

_SAVEFIG = dict(dpi=120, metadata={"Software": None})


def _finish(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, **_SAVEFIG)
    plt.close(fig)


def save_learning_curve(curve, path, title: str = "Training loss") -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(np.arange(1, len(curve) + 1), curve, color="tab:blue", lw=1.2)
    ax.set_xlabel("epoch")
    ax.set_ylabel("negative log-likelihood")
    ax.set_title(title)
    _finish(fig, path)


def save_band(band: dict, path, scatter=None, title: str = "Estimated link") -> None:
    """Link curve with pointwise quantile band; optional (u, y) scatter."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    if scatter is not None:
        ax.plot(scatter[0], scatter[1], ".", color="0.7", ms=2.5, zorder=1)
    ax.plot(band["u"], band["point"], color="tab:blue", lw=1.8, label="estimate")
    ax.plot(band["u"], band["lower"], "--", color="tab:red", lw=1.2, label="band")
    ax.plot(band["u"], band["upper"], "--", color="tab:red", lw=1.2)
    ax.set_xlabel("index u")
    ax.set_ylabel("g(u)")
    ax.set_title(title)
    ax.legend(loc="best")
    _finish(fig, path)


def save_diagnostic(diag, path, title: str = "Residual diagnostic") -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    widths = np.diff(diag.bin_edges)
    ax.bar(diag.bin_edges[:-1], diag.density, width=widths, align="edge",
           color="0.75", edgecolor="0.4", lw=0.4)
    ax.plot(diag.curve_x, diag.curve_y, color="tab:red", lw=1.8)
    ax.set_xlabel("residual")
    ax.set_ylabel("density")
    ax.set_title(title)
    _finish(fig, path)


def save_cv_box(fold_mses: dict, path, title: str = "Cross-validated MSE") -> None:
    """Boxplot of per-fold MSEs, one box per model tag."""
    fig, ax = plt.subplots(figsize=(6, 4))
    labels = list(fold_mses.keys())
    ax.boxplot([fold_mses[k] for k in labels], tick_labels=labels)
    ax.set_ylabel("held-out MSE")
    ax.set_title(title)
    _finish(fig, path)


def save_gmse_box(gmse: dict, path, title: str = "Link-estimation MSE") -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    labels = [k for k, v in gmse.items() if len(v)]
    ax.boxplot([gmse[k] for k in labels], tick_labels=labels)
    ax.set_ylabel("g-MSE")
    ax.set_title(title)
    _finish(fig, path)
