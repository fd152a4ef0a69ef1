"""Binary classification metrics: point metrics from labels, AUCs from scores.

ROC-AUC is the trapezoid over all score thresholds with an exact integer
numerator, which makes it identical (bit for bit) to the Mann-Whitney
statistic with ties counted 1/2. PR-AUC is the step sum over recall.
"""

from __future__ import annotations

import numpy as np


class MetricsError(ValueError):
    pass


def _threshold_counts(y_true, scores):
    """Cumulative tp/fp (python ints) after each distinct descending score."""
    y = np.asarray(y_true).astype(int)
    s = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-s, kind="mergesort")
    s_sorted = s[order]
    y_sorted = y[order]
    tps, fps, thresholds = [], [], []
    tp = fp = 0
    i = 0
    n = len(s_sorted)
    while i < n:
        j = i
        while j + 1 < n and s_sorted[j + 1] == s_sorted[i]:
            j += 1
        grp = y_sorted[i:j + 1]
        tp += int(grp.sum())
        fp += int(len(grp) - grp.sum())
        tps.append(tp)
        fps.append(fp)
        thresholds.append(float(s_sorted[i]))
        i = j + 1
    return tps, fps, thresholds


def roc_auc(y_true, scores) -> float:
    y = np.asarray(y_true).astype(int)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise MetricsError("ROC-AUC needs both classes present")
    tps, fps, _ = _threshold_counts(y, scores)
    num = 0
    tp_prev = fp_prev = 0
    for tp, fp in zip(tps, fps):
        num += (fp - fp_prev) * (tp + tp_prev)
        tp_prev, fp_prev = tp, fp
    return num / (2.0 * n_pos * n_neg)


def pr_auc(y_true, scores) -> float:
    y = np.asarray(y_true).astype(int)
    n_pos = int((y == 1).sum())
    if n_pos == 0 or n_pos == len(y):
        raise MetricsError("PR-AUC needs both classes present")
    tps, fps, _ = _threshold_counts(y, scores)
    auc = 0.0
    r_prev = 0.0
    for tp, fp in zip(tps, fps):
        r = tp / n_pos
        p = tp / (tp + fp)
        auc += (r - r_prev) * p
        r_prev = r
    return auc


def point_metrics(y_true, labels):
    y = np.asarray(y_true).astype(int)
    yhat = np.asarray(labels).astype(int)
    tp = int(np.sum((y == 1) & (yhat == 1)))
    fp = int(np.sum((y == 0) & (yhat == 1)))
    fn = int(np.sum((y == 1) & (yhat == 0)))
    tn = int(np.sum((y == 0) & (yhat == 0)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (2 * precision * recall / (precision + recall)) if precision + recall else 0.0
    return {"precision": precision, "recall": recall, "f1": f1,
            "tp": tp, "fp": fp, "fn": fn, "tn": tn}


def binary_metrics(y_true, scores, labels) -> dict:
    """Precision/recall/F1 from labels plus both AUCs from scores.

    With a single-class y_true the point metrics are still returned and the
    AUCs are None with a note.
    """
    out = point_metrics(y_true, labels)
    y = np.asarray(y_true).astype(int)
    if len(np.unique(y)) < 2:
        out["roc_auc"] = None
        out["pr_auc"] = None
        out["note"] = "single-class truth: AUCs undefined"
        return out
    out["roc_auc"] = roc_auc(y, scores)
    out["pr_auc"] = pr_auc(y, scores)
    return out


def confusion_matrix(y_true, labels):
    m = point_metrics(y_true, labels)
    return np.array([[m["tn"], m["fp"]], [m["fn"], m["tp"]]], dtype=int)


def roc_points(y_true, scores):
    """(fpr, tpr, threshold) rows for plotting, from (0,0) to (1,1)."""
    y = np.asarray(y_true).astype(int)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise MetricsError("ROC curve needs both classes present")
    tps, fps, thr = _threshold_counts(y, scores)
    rows = [(0.0, 0.0, float("inf"))]
    for tp, fp, t in zip(tps, fps, thr):
        rows.append((fp / n_neg, tp / n_pos, t))
    return rows


def pr_points(y_true, scores):
    """(recall, precision, threshold) rows for plotting."""
    y = np.asarray(y_true).astype(int)
    n_pos = int((y == 1).sum())
    if n_pos == 0 or n_pos == len(y):
        raise MetricsError("PR curve needs both classes present")
    tps, fps, thr = _threshold_counts(y, scores)
    rows = [(0.0, 1.0, float("inf"))]
    for tp, fp, t in zip(tps, fps, thr):
        rows.append((tp / n_pos, tp / (tp + fp), t))
    return rows
