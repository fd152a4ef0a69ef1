"""Gradient-boosted regression trees, from scratch.

Additive model z(x) = base_score + sum_k lr * f_k(x). Each round fits one
tree to the negative gradients of the loss (logistic or squared error) with
exact greedy variance-gain splits, leaf-wise growth, and Newton leaf values.
Parameters mirror the invoked library's documented defaults: 100 rounds,
learning rate 0.1, at most 31 leaves, 20 samples per leaf, min sum hessian
1e-3.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np


class GbdtError(ValueError):
    pass


@dataclass(frozen=True)
class GbdtParams:
    n_rounds: int = 100
    learning_rate: float = 0.1
    max_leaves: int = 31
    min_samples_leaf: int = 20
    min_sum_hessian: float = 1e-3
    track_pr_auc: bool = False


@dataclass
class _Tree:
    # parallel arrays; feature == -1 marks a leaf
    feature: list = field(default_factory=list)
    threshold: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    value: list = field(default_factory=list)

    def add_node(self):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        out = np.zeros(len(X))
        stack = [(0, np.arange(len(X)))]
        while stack:
            node, idx = stack.pop()
            if len(idx) == 0:
                continue
            f = self.feature[node]
            if f < 0:
                out[idx] = self.value[node]
                continue
            go_left = X[idx, f] <= self.threshold[node]
            stack.append((self.left[node], idx[go_left]))
            stack.append((self.right[node], idx[~go_left]))
        return out

    def max_feature_index(self) -> int:
        used = [f for f in self.feature if f >= 0]
        return max(used) if used else -1


@dataclass(frozen=True)
class GbdtModel:
    trees: tuple
    objective: str           # "logistic" or "l2"
    learning_rate: float
    base_score: float
    n_features: int
    loss_history: tuple      # training loss before round 1 and after each round
    train_pr_auc: tuple = ()  # per-round train PR-AUC when tracked

    def predict_margin(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise GbdtError(f"expected {self.n_features} features, got {X.shape[1]}")
        if not np.all(np.isfinite(X)):
            raise GbdtError("non-finite feature value")
        z = np.full(len(X), self.base_score)
        for tree in self.trees:
            z += self.learning_rate * tree.predict(X)
        return z


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))


def logistic_grad_hess(y, z):
    """Gradient/hessian of the logistic loss wrt the margin."""
    p = _sigmoid(z)
    return p - y, p * (1.0 - p)


def logistic_loss(y, z) -> float:
    # numerically stable: log(1 + exp(-|z|)) + max(z, 0) - y*z
    z = np.asarray(z, dtype=np.float64)
    return float(np.mean(np.log1p(np.exp(-np.abs(z))) + np.maximum(z, 0.0) - y * z))


def l2_loss(y, z) -> float:
    return float(0.5 * np.mean((y - z) ** 2))


def _best_split(X, residual, idx, min_leaf):
    """Exact greedy variance-gain split over all features and thresholds."""
    n = len(idx)
    if n < 2 * min_leaf:
        return None
    r = residual[idx]
    total = r.sum()
    parent = total * total / n
    best = None
    for f in range(X.shape[1]):
        xs = X[idx, f]
        order = np.argsort(xs, kind="mergesort")
        xs_sorted = xs[order]
        r_sorted = r[order]
        csum = np.cumsum(r_sorted)
        nl = np.arange(1, n)
        valid = (nl >= min_leaf) & (n - nl >= min_leaf) & (xs_sorted[:-1] < xs_sorted[1:])
        if not valid.any():
            continue
        left_sum = csum[:-1]
        gain = np.full(n - 1, -np.inf)
        gain[valid] = (left_sum[valid] ** 2 / nl[valid]
                       + (total - left_sum[valid]) ** 2 / (n - nl[valid])
                       - parent)
        k = int(np.argmax(gain))
        g = float(gain[k])
        if g > 0 and (best is None or g > best[0]):
            thr = 0.5 * (xs_sorted[k] + xs_sorted[k + 1])
            best = (g, f, thr, idx[xs <= thr], idx[xs > thr])
    return best


def _fit_tree(X, grad, hess, params: GbdtParams) -> _Tree:
    """One regression tree on the negative gradients, grown leaf-wise."""
    residual = -grad
    tree = _Tree()
    root = tree.add_node()
    all_idx = np.arange(len(X))

    def leaf_value(idx):
        h = max(float(hess[idx].sum()), params.min_sum_hessian)
        return float(residual[idx].sum()) / h

    tree.value[root] = leaf_value(all_idx)
    heap = []
    counter = 0
    split = _best_split(X, residual, all_idx, params.min_samples_leaf)
    if split is not None:
        heapq.heappush(heap, (-split[0], counter, root, split))
        counter += 1
    n_leaves = 1
    while heap and n_leaves < params.max_leaves:
        _, _, node, (gain, f, thr, left_idx, right_idx) = heapq.heappop(heap)
        lnode = tree.add_node()
        rnode = tree.add_node()
        tree.feature[node] = f
        tree.threshold[node] = thr
        tree.left[node] = lnode
        tree.right[node] = rnode
        tree.value[lnode] = leaf_value(left_idx)
        tree.value[rnode] = leaf_value(right_idx)
        n_leaves += 1
        for child, idx in ((lnode, left_idx), (rnode, right_idx)):
            s = _best_split(X, residual, idx, params.min_samples_leaf)
            if s is not None:
                heapq.heappush(heap, (-s[0], counter, child, s))
                counter += 1
    return tree


def gbdt_train(X, y, objective: str = "logistic",
               params: GbdtParams = GbdtParams()) -> GbdtModel:
    """Boost ``n_rounds`` trees; training loss is asserted nonincreasing."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    if objective not in ("logistic", "l2"):
        raise GbdtError(f"unknown objective {objective!r}")
    if len(X) != len(y):
        raise GbdtError("X and y length mismatch")
    if len(X) < 2 * params.min_samples_leaf:
        raise GbdtError(
            f"need at least {2 * params.min_samples_leaf} rows, got {len(X)}")
    if objective == "logistic":
        if not np.all(np.isin(y, (0.0, 1.0))):
            raise GbdtError("logistic objective needs binary 0/1 labels")
        p0 = min(max(float(y.mean()), 1e-12), 1 - 1e-12)
        base = math.log(p0 / (1.0 - p0))
        loss_fn = logistic_loss
    else:
        base = float(y.mean())
        loss_fn = l2_loss

    z = np.full(len(y), base)
    trees = []
    losses = [loss_fn(y, z)]
    pr_history = []
    from .metrics import binary_metrics  # local import avoids a cycle
    for rnd in range(params.n_rounds):
        if objective == "logistic":
            grad, hess = logistic_grad_hess(y, z)
        else:
            grad, hess = z - y, np.ones(len(y))
        tree = _fit_tree(X, grad, hess, params)
        trees.append(tree)
        z = z + params.learning_rate * tree.predict(X)
        loss = loss_fn(y, z)
        if loss > losses[-1] + 1e-10 * (1.0 + abs(losses[-1])):
            raise GbdtError(
                f"training loss increased at round {rnd + 1}: "
                f"{losses[-1]} -> {loss}")
        losses.append(loss)
        if params.track_pr_auc and objective == "logistic":
            scores = _sigmoid(z)
            m = binary_metrics(y.astype(int), scores, (scores >= 0.5).astype(int))
            pr_history.append(m["pr_auc"])
    return GbdtModel(trees=tuple(trees), objective=objective,
                     learning_rate=params.learning_rate, base_score=base,
                     n_features=X.shape[1], loss_history=tuple(losses),
                     train_pr_auc=tuple(pr_history))


def gbdt_predict(model: GbdtModel, x):
    """Margin, sigmoid probability, and the >= 0.5 label for one sample."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    z = model.predict_margin(np.atleast_2d(x))
    p = _sigmoid(z)
    label = (p >= 0.5).astype(int)
    if single:
        return float(z[0]), float(p[0]), int(label[0])
    return z, p, label
