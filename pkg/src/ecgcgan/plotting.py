"""Figures for beats, training snapshots, losses and detection ROC.

Everything renders through the Agg backend to SVG with a fixed hash salt
and no date stamp, so the same inputs give byte-identical files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from sklearn.metrics import roc_curve  # noqa: E402

from .data import BEAT_LENGTH, LABELS  # noqa: E402

STYLE = {
    "font.size": 8,
    "axes.titlesize": 9,
    "axes.labelsize": 8,
    "legend.fontsize": 7,
    "lines.linewidth": 1.0,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "ecgcgan",
    "svg.fonttype": "path",
    "path.simplify": False,
}
REAL_COLOR = "#1f4e79"
GEN_COLOR = "#c0504d"


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def _beat_axes(ax, title=None):
    ax.set_xlim(0, BEAT_LENGTH)
    ax.set_ylim(0, 1)
    if title:
        ax.set_title(title)


def plot_beat_pairs(real, generated, labels, path, per_class: int = 1) -> Path:
    """One panel per class overlaying real beats and their generated twins."""
    real, generated = np.atleast_2d(real), np.atleast_2d(generated)
    labels = np.asarray(labels)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(LABELS), figsize=(10, 2.4), sharey=True)
        t = np.arange(BEAT_LENGTH)
        for c, (ax, name) in enumerate(zip(axes, LABELS)):
            _beat_axes(ax, name)
            idx = np.flatnonzero(labels == c)[:per_class]
            for j, i in enumerate(idx):
                ax.plot(t, real[i], color=REAL_COLOR, label="real" if j == 0 else None)
                ax.plot(t, generated[i], color=GEN_COLOR, linestyle="--", label="generated" if j == 0 else None)
            if len(idx) == 0:
                ax.text(0.5, 0.5, "no beats", transform=ax.transAxes, ha="center", va="center")
            ax.set_xlabel("sample")
        axes[0].set_ylabel("amplitude")
        axes[0].legend(loc="upper right", frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def plot_snapshot_grid(snapshots, path) -> Path:
    """Rows are epochs, columns are classes; ``snapshots`` maps (epoch, class) to (real, generated)."""
    epochs = sorted({e for e, _ in snapshots})
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(len(epochs), len(LABELS), figsize=(10, 1.9 * len(epochs)),
                                 sharex=True, sharey=True, squeeze=False)
        t = np.arange(BEAT_LENGTH)
        for r, epoch in enumerate(epochs):
            for c, name in enumerate(LABELS):
                ax = axes[r, c]
                _beat_axes(ax, f"{name}, epoch {epoch}")
                pair = snapshots.get((epoch, name))
                if pair is not None:
                    ax.plot(t, pair[0], color=REAL_COLOR)
                    ax.plot(t, pair[1], color=GEN_COLOR, linestyle="--")
        fig.tight_layout()
        return _save(fig, path)


def plot_losses(log: list[dict], path) -> Path:
    """Per-epoch means of the discriminator and generator loss terms."""
    epochs = sorted({int(r["epoch"]) for r in log})
    terms = [("d_adv_loss", "D adversarial"), ("d_class_loss", "D class"),
             ("g_adv_loss", "G adversarial"), ("g_rec_loss", "G reconstruction"), ("g_class_loss", "G class")]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3))
        for key, name in terms:
            means = [np.mean([float(r[key]) for r in log if int(r["epoch"]) == e]) for e in epochs]
            ax.plot(epochs, means, marker="o", markersize=2, label=name)
        ax.set_yscale("log")
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss")
        ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def plot_roc(scores, truth, path, auc_value: float | None = None) -> Path:
    """ROC of adversarial detection, generated beats as the positive class."""
    fpr, tpr, _ = roc_curve(np.asarray(truth), np.asarray(scores))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(3.2, 3.2))
        ax.plot(fpr, tpr, color=GEN_COLOR, label=None if auc_value is None else f"AUC {auc_value:.3f}")
        ax.plot([0, 1], [0, 1], color="0.6", linestyle=":")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1)
        ax.set_xlabel("false positive rate")
        ax.set_ylabel("true positive rate")
        if auc_value is not None:
            ax.legend(loc="lower right", frameon=False)
        fig.tight_layout()
        return _save(fig, path)
