"""Figures written next to the CSV/JSON reports.

All functions render with the non-interactive Agg backend and save to
``path``; nothing is shown on screen.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

FONTSIZE = 9


def format_axis(ax):
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    ax.tick_params(direction="out", labelsize=FONTSIZE - 1, length=3, width=0.6)
    ax.xaxis.label.set_size(FONTSIZE)
    ax.yaxis.label.set_size(FONTSIZE)


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_confusion(report, path):
    """Row-normalized confusion matrix with raw counts printed in the cells."""
    cm = np.asarray(report.confusion)
    rows = cm.sum(axis=1, keepdims=True)
    norm = np.divide(cm, rows, out=np.zeros(cm.shape), where=rows > 0)
    k = cm.shape[0]
    size = max(3.0, 0.45 * k + 1.5)
    fig, ax = plt.subplots(figsize=(size + 0.8, size))
    im = ax.imshow(norm, cmap="Blues", vmin=0.0, vmax=1.0)
    if k <= 30:
        for i in range(k):
            for j in range(k):
                colour = "white" if norm[i, j] > 0.6 else "black"
                ax.text(j, i, str(cm[i, j]), ha="center", va="center", fontsize=FONTSIZE - 1, color=colour)
        ax.set_xticks(range(k))
        ax.set_yticks(range(k))
        ax.set_xticklabels(report.class_names, rotation=45, ha="right")
        ax.set_yticklabels(report.class_names)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title(f"accuracy {report.accuracy:.3f}", fontsize=FONTSIZE)
    fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
    format_axis(ax)
    return _save(fig, path)


def plot_training_log(history, path):
    """Loss (log scale) and accuracy per epoch."""
    epochs = [m["epoch"] for m in history]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(7.0, 2.8))
    ax1.semilogy(epochs, [max(m["loss"], 1e-300) for m in history], color="tab:red", lw=1.2)
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("summed cross-entropy")
    ax2.plot(epochs, [m["accuracy"] for m in history], color="tab:blue", lw=1.2, label="train")
    if any("test_accuracy" in m for m in history):
        pts = [(m["epoch"], m["test_accuracy"]) for m in history if "test_accuracy" in m]
        ax2.plot(*zip(*pts), color="tab:green", lw=1.2, label="held-out")
        ax2.legend(fontsize=FONTSIZE - 1, frameon=False)
    ax2.set_ylim(0.0, 1.02)
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("accuracy")
    for ax in (ax1, ax2):
        format_axis(ax)
    return _save(fig, path)


def plot_verification(report, path):
    """Worst certified margin per suite; red bars mark failing suites."""
    suites = [s for s in report.suites if s.trials > 0]
    fig, ax = plt.subplots(figsize=(6.0, 2.6))
    if suites:
        names = [s.name for s in suites]
        values = [s.worst_margin for s in suites]
        colours = ["tab:green" if s.passed else "tab:red" for s in suites]
        ax.barh(names, values, color=colours)
        ax.axvline(0.0, color="black", lw=0.8)
        ax.set_xscale("symlog", linthresh=1e-12)
    ax.set_xlabel("worst margin (suite-specific units)")
    format_axis(ax)
    return _save(fig, path)
