"""Matplotlib renderings written alongside the delimited report files.

Each helper writes a single PNG (atomically: bytes in memory, then
rename into place).  These live on the CLI report path only; the
evaluation harness itself never plots.
"""

import io

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .model_io import atomic_write

DPI = 150
STAGE_COLORS = {"raw": "#9aa5b1", "preprocessed": "#2f6fb3"}


def _save(fig, path) -> None:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=DPI, bbox_inches="tight")
    plt.close(fig)
    atomic_write(path, buf.getvalue())


def report_bars(report, path) -> None:
    """Grouped per-model bars of accuracy and macro F1, raw vs preprocessed."""
    from .pipeline import MODEL_LABELS

    models = []
    for row in report.rows:
        if row.model not in models:
            models.append(row.model)
    stages = ["raw", "preprocessed"]
    fig, axes = plt.subplots(1, 2, figsize=(11, 4), sharey=True)
    for ax, metric in zip(axes, ("accuracy", "f1")):
        x = np.arange(len(models))
        width = 0.38
        for si, stage in enumerate(stages):
            vals = []
            for m in models:
                rows = [r for r in report.rows if r.model == m and r.stage == stage]
                vals.append(getattr(rows[0], metric) if rows else np.nan)
            ax.bar(x + (si - 0.5) * width, vals, width,
                   label=stage, color=STAGE_COLORS[stage])
        ax.set_xticks(x)
        ax.set_xticklabels([MODEL_LABELS.get(m, m) for m in models],
                           rotation=30, ha="right", fontsize=8)
        ax.set_ylim(0.0, 1.0)
        ax.set_ylabel(metric)
        ax.grid(axis="y", alpha=0.3)
    axes[0].legend(loc="lower right", fontsize=8)
    fig.suptitle(f"stage comparison ({report.mode}, seed {report.seed})")
    _save(fig, path)


def confusion_heatmap(cm, class_names, path, title="confusion matrix") -> None:
    cm = np.asarray(cm, dtype=float)
    share = cm / np.maximum(cm.sum(axis=1, keepdims=True), 1.0)
    fig, ax = plt.subplots(figsize=(5, 4.5))
    im = ax.imshow(share, cmap="Blues", vmin=0.0, vmax=1.0)
    ax.set_xticks(range(len(class_names)), class_names, rotation=45, ha="right")
    ax.set_yticks(range(len(class_names)), class_names)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    for i in range(cm.shape[0]):
        for j in range(cm.shape[1]):
            color = "white" if share[i, j] > 0.5 else "black"
            ax.text(j, i, f"{int(cm[i, j])}", ha="center", va="center",
                    color=color, fontsize=8)
    ax.set_title(title)
    fig.colorbar(im, ax=ax, label="row share")
    _save(fig, path)


def gain_bars(scores, column_names, path, top: int = 30) -> None:
    ranked = sorted(scores, key=lambda s: (-s.gain_bits, s.feature_index))[:top]
    names = [column_names[s.feature_index] if column_names else f"f{s.feature_index}"
             for s in ranked]
    gains = [s.gain_bits for s in ranked]
    fig, ax = plt.subplots(figsize=(7, 0.28 * len(ranked) + 1.2))
    ax.barh(range(len(ranked)), gains, color="#2f6fb3")
    ax.set_yticks(range(len(ranked)), names, fontsize=7)
    ax.invert_yaxis()
    ax.set_xlabel("information gain (bits)")
    ax.set_title(f"top {len(ranked)} features")
    ax.grid(axis="x", alpha=0.3)
    _save(fig, path)


def loss_curve(epoch_losses, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(range(1, len(epoch_losses) + 1), epoch_losses, marker="o", ms=3)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean training loss")
    ax.set_title("training loss")
    ax.grid(alpha=0.3)
    _save(fig, path)
