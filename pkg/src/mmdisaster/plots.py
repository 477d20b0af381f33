"""Matplotlib figures written next to history and report files.

Only the CLI imports this module, and only when figures are requested.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# no timestamps or version strings in the files, so reruns are byte-stable
_PNG_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_history(history, path):
    """Mean loss (log scale) and train accuracy per epoch."""
    epochs = [r.epoch for r in history]
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax_loss.plot(epochs, [r.mean_loss for r in history], marker=".", color="tab:blue")
    ax_loss.set_yscale("log")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("mean train loss")
    ax_acc.plot(epochs, [r.train_accuracy for r in history], marker=".", color="tab:green")
    ax_acc.set_ylim(-0.02, 1.02)
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("train accuracy")
    for ax in (ax_loss, ax_acc):
        ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)


def plot_confusion(report, path):
    cm = np.asarray(report.confusion)
    C = cm.shape[0]
    names = report.class_names or [str(c) for c in range(C)]
    fig, ax = plt.subplots(figsize=(1.2 + 0.6 * C, 1.0 + 0.6 * C))
    im = ax.imshow(cm, cmap="Blues")
    ax.set_xticks(range(C), names, rotation=45, ha="right")
    ax.set_yticks(range(C), names)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    thresh = cm.max() / 2 if cm.size else 0
    for i in range(C):
        for j in range(C):
            ax.text(j, i, str(cm[i, j]), ha="center", va="center",
                    color="white" if cm[i, j] > thresh else "black", fontsize=8)
    fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
    fig.tight_layout()
    return _save(fig, path)


def plot_per_class(report, path):
    """Grouped bars of per-class precision, recall and F1."""
    C = len(report.per_class)
    names = report.class_names or [str(c) for c in range(C)]
    x = np.arange(C)
    width = 0.27
    fig, ax = plt.subplots(figsize=(max(4.0, 0.9 * C + 1.5), 3.2))
    for off, key in zip((-width, 0.0, width), ("precision", "recall", "f1")):
        ax.bar(x + off, [getattr(s, key) for s in report.per_class], width, label=key)
    ax.set_xticks(x, names, rotation=45, ha="right")
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=8, ncol=3, loc="lower right")
    fig.tight_layout()
    return _save(fig, path)
