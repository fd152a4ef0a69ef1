"""Standard scaling and minority oversampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class PreprocessError(ValueError):
    pass


@dataclass(frozen=True)
class Scaler:
    mean_: np.ndarray
    std_: np.ndarray

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean_) / self.std_

    def inverse_transform(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) * self.std_ + self.mean_


def fit_scaler(X, feature_names=None) -> Scaler:
    """Fit per-column mean/std; a constant column is an error (named)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] < 2:
        raise PreprocessError("need at least 2 rows to fit a scaler")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    for j, s in enumerate(std):
        if s <= 0.0:
            name = feature_names[j] if feature_names else f"column {j}"
            raise PreprocessError(f"constant feature: {name}")
    return Scaler(mean_=mean, std_=std)


def smote(X, y, k: int = 5, seed: int = 0):
    """Oversample the minority class to parity by interpolating between
    minority nearest neighbors.

    Each synthetic row is x_i + u * (x_nn - x_i) with u ~ U(0, 1) and x_nn one
    of the k (capped at minority-1) Euclidean nearest minority neighbors.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) != 2:
        raise PreprocessError(f"smote needs exactly 2 classes, got {len(classes)}")
    minority = classes[np.argmin(counts)]
    majority = classes[np.argmax(counts)]
    n_min, n_maj = counts.min(), counts.max()
    if n_min < 2:
        raise PreprocessError("minority class needs at least 2 samples")
    if n_min == n_maj:
        return X.copy(), y.copy()
    rng = np.random.default_rng(seed)
    Xmin = X[y == minority]
    k_eff = min(k, n_min - 1)
    # pairwise distances within the minority class
    d2 = ((Xmin[:, None, :] - Xmin[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    nn_idx = np.argsort(d2, axis=1)[:, :k_eff]
    n_new = n_maj - n_min
    base = rng.integers(0, n_min, size=n_new)
    pick = rng.integers(0, k_eff, size=n_new)
    u = rng.uniform(0.0, 1.0, size=n_new)
    anchors = Xmin[base]
    neighbors = Xmin[nn_idx[base, pick]]
    synthetic = anchors + u[:, None] * (neighbors - anchors)
    X_out = np.vstack([X, synthetic])
    y_out = np.concatenate([y, np.full(n_new, minority, dtype=y.dtype)])
    return X_out, y_out
