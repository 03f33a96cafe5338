"""Matplotlib renderings of the text reports, written next to the TSV output."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _axes(figsize=(6.0, 4.0)):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=figsize)
    return fig, ax


def _finish(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    import matplotlib.pyplot as plt
    plt.close(fig)
    return path


def save_metrics_bars(reports: dict[str, "MetricsReport"], path) -> Path:
    """Grouped bars: one group per metric, one bar per system."""
    fig, ax = _axes()
    metric_names = ["character", "important", "alpha-word", "sequence"]
    systems = list(reports)
    width = 0.8 / max(1, len(systems))
    x = np.arange(len(metric_names))
    for i, name in enumerate(systems):
        r = reports[name]
        values = [r.character_accuracy, r.important_char_accuracy,
                  r.alpha_word_accuracy, r.sequence_accuracy]
        ax.bar(x + i * width, values, width=width, label=name)
    ax.set_xticks(x + width * (len(systems) - 1) / 2)
    ax.set_xticklabels(metric_names)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("accuracy")
    ax.legend()
    return _finish(fig, path)


def save_confusion_heatmaps(matrix, path) -> Path:
    """One log-scaled heatmap per base family that actually occurs."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    families = [fam for fam in matrix.families if any(matrix.row_sum(ch) for ch in fam)]
    if not families:
        families = [matrix.families[0]] if matrix.families else [("?",)]
    fig, axes = plt.subplots(1, len(families), figsize=(2.2 * len(families) + 1, 3.2))
    if len(families) == 1:
        axes = [axes]
    for ax, fam in zip(axes, families):
        grid = np.array([[matrix.counts.get((a, p), 0) for p in fam] for a in fam], dtype=float)
        ax.imshow(np.log1p(grid), cmap="Blues")
        ax.set_xticks(range(len(fam)), fam)
        ax.set_yticks(range(len(fam)), fam)
        for i, a in enumerate(fam):
            for j, p in enumerate(fam):
                ax.text(j, i, str(int(grid[i, j])), ha="center", va="center", fontsize=8)
        ax.set_xlabel("predicted")
        ax.set_ylabel("actual")
    return _finish(fig, path)


def save_training_curves(records: list[dict], path) -> Path:
    fig, ax = _axes()
    epochs = [r["epoch"] for r in records]
    ax.plot(epochs, [r["train_loss"] for r in records], marker="o", label="train loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    dev_points = [(r["epoch"], r["dev"]["alpha_word_accuracy"]) for r in records if "dev" in r]
    if dev_points:
        ax2 = ax.twinx()
        ax2.plot(*zip(*dev_points), marker="s", color="tab:green", label="dev alpha-word")
        ax2.set_ylabel("dev alpha-word accuracy")
        ax2.set_ylim(0, 1.02)
    ax.legend(loc="upper right")
    return _finish(fig, path)


def save_length_histogram(lengths, path) -> Path:
    fig, ax = _axes()
    ax.hist(list(lengths), bins=40, color="tab:blue")
    ax.set_xlabel("sequence length (characters)")
    ax.set_ylabel("sequences")
    return _finish(fig, path)


def save_ambiguity_bars(stats, path) -> Path:
    fig, ax = _axes()
    labels = ["words", "bases"]
    unamb = [stats.unambiguous_words, stats.unambiguous_bases]
    amb = [stats.ambiguous_words, stats.ambiguous_bases]
    x = np.arange(2)
    ax.bar(x - 0.2, unamb, width=0.4, label="unambiguous")
    ax.bar(x + 0.2, amb, width=0.4, label="ambiguous")
    ax.set_xticks(x, labels)
    ax.set_yscale("log")
    ax.set_ylabel("count")
    ax.legend()
    return _finish(fig, path)
