"""Figure rendering for the CLI report paths.

Each function writes one matplotlib figure next to the delimited output
it illustrates. Rendering always goes through the Agg backend so the CLI
works headless and produces identical files across runs.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def save_lr_curve(iters, lrs, path) -> None:
    """Learning-rate schedule over iterations, log-scaled rate axis."""
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(iters, lrs, lw=1.5)
    ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel("learning rate")
    ax.set_title("learning-rate schedule")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_anchor_plot(level_names, per_level_boxes, image_w, image_h, path,
                     max_per_level: int = 64) -> None:
    """Anchor outlines per pyramid level over the image rectangle."""
    fig, ax = plt.subplots(figsize=(6, 6))
    colors = plt.cm.viridis(np.linspace(0.0, 0.9, len(level_names)))
    for name, boxes, color in zip(level_names, per_level_boxes, colors):
        stride = max(len(boxes) // max_per_level, 1)
        shown = boxes[::stride]
        for b in shown:
            ax.add_patch(plt.Rectangle((b.x1, b.y1), b.width, b.height,
                                       fill=False, edgecolor=color, lw=0.5))
        ax.plot([], [], color=color, label=f"{name} ({len(boxes)})")
    ax.add_patch(plt.Rectangle((0, 0), image_w, image_h, fill=False,
                               edgecolor="black", lw=1.5))
    margin = 0.25 * max(image_w, image_h)
    ax.set_xlim(-margin, image_w + margin)
    ax.set_ylim(image_h + margin, -margin)
    ax.set_aspect("equal")
    ax.legend(loc="upper right", fontsize=8)
    ax.set_title("anchors per level")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_quality_histograms(stage_names, counts_per_stage, path) -> None:
    """Per-stage max-IoU histograms, one panel per refinement stage."""
    n = len(stage_names)
    fig, axes = plt.subplots(1, n, figsize=(3.2 * n, 3.2), sharey=True)
    if n == 1:
        axes = [axes]
    for ax, name, counts in zip(axes, stage_names, counts_per_stage):
        counts = np.asarray(counts)
        edges = np.linspace(0.0, 1.0, len(counts) + 1)
        ax.bar(edges[:-1], counts, width=np.diff(edges), align="edge",
               edgecolor="white")
        ax.set_title(name)
        ax.set_xlabel("max IoU")
    axes[0].set_ylabel("proposals")
    fig.suptitle("box quality by refinement stage")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_eval_chart(result, names, path) -> None:
    """Per-class AP bars (threshold-averaged) with the overall mean line."""
    cats = sorted(c for c, v in result.per_class_ap.items() if v is not None)
    values = [result.per_class_ap[c] for c in cats]
    labels = [names.get(c, str(c)) for c in cats]
    fig, ax = plt.subplots(figsize=(max(4.0, 1.2 * len(cats)), 4))
    ax.bar(range(len(cats)), values, color="steelblue")
    ax.axhline(result.mean_ap, color="firebrick", ls="--",
               label=f"mAP {result.mean_ap:.4f}")
    ax.set_xticks(range(len(cats)))
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel(
        f"AP@{result.thresholds[0]:.2f}:{result.thresholds[-1]:.2f}"
    )
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_gradcheck_chart(reports, tolerance, path) -> None:
    """Max relative gradient error per trial, one line per argument."""
    keys = [k for k in ("input", "weight", "offsets", "bilinear")
            if reports and k in reports[0]]
    trials = [r["trial"] for r in reports]
    fig, ax = plt.subplots(figsize=(7, 4))
    for key in keys:
        ax.plot(trials, [r[key] for r in reports], marker="o", ms=3,
                label=key)
    ax.axhline(tolerance, color="firebrick", ls="--",
               label=f"tolerance {tolerance:g}")
    ax.set_yscale("log")
    ax.set_xlabel("trial")
    ax.set_ylabel("max relative error")
    ax.set_title("analytic vs finite-difference gradients")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
