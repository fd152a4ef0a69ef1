"""Figure rendering for the report paths. Each helper writes one PNG next to
the delimited output it visualizes."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SAVE_KW = dict(dpi=140, metadata={"Software": None})


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_roc_curve(points, path, auc=None):
    fpr = [p[0] for p in points]
    tpr = [p[1] for p in points]
    fig, ax = plt.subplots(figsize=(5, 5))
    label = f"ROC (AUC={auc:.3f})" if auc is not None else "ROC"
    ax.plot(fpr, tpr, "-", lw=1.8, label=label)
    ax.plot([0, 1], [0, 1], "k--", lw=0.8, alpha=0.6)
    ax.set_xlabel("False positive rate")
    ax.set_ylabel("True positive rate")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    ax.legend(loc="lower right")
    _finish(fig, path)


def save_pr_curve(points, path, auc=None):
    rec = [p[0] for p in points]
    prec = [p[1] for p in points]
    fig, ax = plt.subplots(figsize=(5, 5))
    label = f"PR (AUC={auc:.3f})" if auc is not None else "PR"
    ax.step(rec, prec, where="post", lw=1.8, label=label)
    ax.set_xlabel("Recall")
    ax.set_ylabel("Precision")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.05)
    ax.legend(loc="lower left")
    _finish(fig, path)


def save_confusion_matrix(matrix, path):
    m = np.asarray(matrix)
    fig, ax = plt.subplots(figsize=(4.2, 4))
    ax.imshow(m, cmap="Blues")
    for (i, j), v in np.ndenumerate(m):
        ax.text(j, i, str(int(v)), ha="center", va="center",
                color="black" if v < m.max() * 0.6 else "white")
    ax.set_xticks([0, 1], ["pred 0", "pred 1"])
    ax.set_yticks([0, 1], ["true 0", "true 1"])
    _finish(fig, path)


def save_shap_summary(feature_names, mean_abs, path):
    fig, ax = plt.subplots(figsize=(5.5, 3.2))
    order = np.argsort(mean_abs)
    ax.barh(np.array(feature_names)[order], np.array(mean_abs)[order], color="#4878cf")
    ax.set_xlabel("mean |contribution| (margin units)")
    _finish(fig, path)


def save_learning_curve(values, path):
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    ax.plot(np.arange(1, len(values) + 1), values, lw=1.6)
    ax.set_xlabel("Boosting round")
    ax.set_ylabel("Training PR-AUC")
    _finish(fig, path)


def save_sweep_heatmap(thresholds, n_images_list, grid, path, title):
    fig, ax = plt.subplots(figsize=(6, 4.5))
    arr = np.asarray(grid, dtype=float)
    im = ax.imshow(arr, aspect="auto", origin="lower", cmap="viridis")
    ax.set_xticks(range(len(thresholds)), [f"{t:.0f}" for t in thresholds],
                  rotation=45, ha="right")
    ax.set_yticks(range(len(n_images_list)), [str(n) for n in n_images_list])
    ax.set_xlabel("nitrate threshold (ppm)")
    ax.set_ylabel("images per assessment")
    ax.set_title(title)
    fig.colorbar(im, ax=ax)
    _finish(fig, path)


def save_change_rate_comparison(rate_count, rate_nnd, path):
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.boxplot([rate_count, rate_nnd], tick_labels=["point count", "mean NND"])
    ax.set_ylabel("absolute change rate after damage")
    _finish(fig, path)


def save_point_damage_example(points, path, boundary=500.0):
    pts = np.asarray(points)
    fig, ax = plt.subplots(figsize=(5, 5))
    kept = pts[:, 0] <= boundary
    ax.plot(pts[kept, 0], pts[kept, 1], ".", ms=2.5, label="kept")
    ax.plot(pts[~kept, 0], pts[~kept, 1], ".", ms=2.5, color="#cc4444", label="removed")
    ax.axvline(boundary, color="k", lw=1, ls="--", label="damage boundary")
    ax.set_aspect("equal")
    ax.legend(loc="upper right", fontsize=8)
    _finish(fig, path)


def save_vif_bars(tables, path):
    fig, axes = plt.subplots(1, len(tables), figsize=(4.2 * len(tables), 3.4))
    if len(tables) == 1:
        axes = [axes]
    for ax, (title, names, vifs) in zip(axes, tables):
        ax.barh(names, vifs, color="#4878cf")
        ax.axvline(10.0, color="#cc4444", lw=1, ls="--")
        ax.set_xlabel("VIF")
        ax.set_title(title)
    _finish(fig, path)


def save_regression_scatter(truths, preds, path):
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot(truths, preds, ".", ms=3, alpha=0.6)
    lo = min(min(truths), min(preds))
    hi = max(max(truths), max(preds))
    ax.plot([lo, hi], [lo, hi], "k--", lw=0.8)
    ax.set_xlabel("observed NND (mm)")
    ax.set_ylabel("predicted NND (mm)")
    _finish(fig, path)
