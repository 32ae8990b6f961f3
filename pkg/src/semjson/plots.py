"""Figure rendering for report outputs. All figures go to files (Agg)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_depth_histogram(depth_counts: dict, path) -> None:
    """Bar chart of records per nesting depth."""
    depths = sorted(int(d) for d in depth_counts)
    counts = [depth_counts[d] if d in depth_counts else depth_counts[str(d)]
              for d in depths]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar([str(d) for d in depths], counts, color="#4878a8")
    ax.set_xlabel("depth (key segments)")
    ax.set_ylabel("records")
    ax.set_title("Extracted key-value pairs by depth")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_training_curves(history: list[dict], path) -> None:
    """Loss curves plus validation macro-F1 on a twin axis."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    epochs = [h["epoch"] for h in history]
    ax.plot(epochs, [h["train_loss"] for h in history], label="train loss",
            color="#b4543c")
    if history and "val_loss" in history[0]:
        ax.plot(epochs, [h["val_loss"] for h in history], label="validation loss",
                color="#4878a8")
    ax.set_xlabel("epoch")
    ax.set_ylabel("cross-entropy")
    lines, labels = ax.get_legend_handles_labels()
    if history and "val_macro_f1" in history[0]:
        ax2 = ax.twinx()
        ax2.plot(epochs, [h["val_macro_f1"] for h in history],
                 label="validation macro-F1", color="#3c8c50", linestyle="--")
        ax2.set_ylabel("macro-F1")
        ax2.set_ylim(0, 1.05)
        l2, lb2 = ax2.get_legend_handles_labels()
        lines += l2
        labels += lb2
    ax.legend(lines, labels, loc="center right", fontsize=8)
    ax.set_title("Training history")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_confusion_heatmap(confusion, class_names: list[str], path) -> None:
    matrix = np.asarray(confusion, dtype=float)
    fig, ax = plt.subplots(figsize=(max(5, 0.45 * len(class_names) + 2),) * 2)
    im = ax.imshow(matrix, cmap="Blues")
    ax.set_xticks(range(len(class_names)))
    ax.set_xticklabels(class_names, rotation=90, fontsize=7)
    ax.set_yticks(range(len(class_names)))
    ax.set_yticklabels(class_names, fontsize=7)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    threshold = matrix.max() / 2 if matrix.size else 0
    for i in range(matrix.shape[0]):
        for j in range(matrix.shape[1]):
            if matrix[i, j]:
                ax.text(j, i, int(matrix[i, j]), ha="center", va="center",
                        fontsize=6,
                        color="white" if matrix[i, j] > threshold else "black")
    fig.colorbar(im, ax=ax, shrink=0.8)
    ax.set_title("Confusion matrix")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_comparison_chart(comparison: dict, path) -> None:
    """Grouped per-class F1 bars, baseline vs proposed, by node group."""
    rows = (comparison["groups"]["single_node"]
            + comparison["groups"]["multi_node"])
    names = [r["class"] for r in rows]
    baseline = [r["f1_baseline"] for r in rows]
    proposed = [r["f1_proposed"] for r in rows]
    x = np.arange(len(names))
    width = 0.38
    fig, ax = plt.subplots(figsize=(max(6, 0.6 * len(names) + 2), 4.5))
    ax.bar(x - width / 2, baseline, width, label="baseline (single-column)",
           color="#a8a8a8")
    ax.bar(x + width / 2, proposed, width, label="proposed (graph)",
           color="#3c8c50")
    n_single = len(comparison["groups"]["single_node"])
    if 0 < n_single < len(names):
        ax.axvline(n_single - 0.5, color="black", linewidth=0.8, linestyle=":")
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("test F1")
    ax.set_ylim(0, 1.05)
    avg = comparison["average"]
    ax.set_title(
        f"Per-class F1 (avg {avg['f1_baseline']:.2f} vs {avg['f1_proposed']:.2f})"
    )
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
