"""Leave-one-group-out evaluation: classifier (compound leaf), regressor
(leaflet), and threshold/measurement-count sweeps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset, CLASSIFY_FEATURES, REGRESS_FEATURES
from .preprocess import fit_scaler, smote
from .gbdt import GbdtParams, gbdt_train, _sigmoid
from .metrics import binary_metrics
from .shapley import shapley


class PipelineError(ValueError):
    pass


@dataclass(frozen=True)
class FoldRecord:
    group: str
    y_true: int
    prob: float
    label_pred: int
    n_train: int
    n_test_rows: int
    scaler_mean: tuple
    scaler_std: tuple


@dataclass(frozen=True)
class FoldResults:
    folds: tuple
    skipped: tuple            # group ids whose training set went single-class
    metrics: dict
    threshold_ppm: float
    n_images: int
    seed: int
    shap_mean_abs: tuple = ()     # mean |phi| per feature over test draws
    learning_curve: tuple = ()    # mean per-round train PR-AUC across folds

    def truths(self):
        return np.array([f.y_true for f in self.folds])

    def probs(self):
        return np.array([f.prob for f in self.folds])


def assign_labels(ds: Dataset, threshold_ppm: float,
                  positive_below: bool = False) -> np.ndarray:
    """Binary labels: 1 iff nitrate >= threshold (flip with positive_below)."""
    nitrate = ds.column("nitrate_ppm")
    labels = (nitrate >= threshold_ppm).astype(int)
    if positive_below:
        labels = 1 - labels
    return labels


def loocv_classify(ds: Dataset, threshold_ppm: float, n_images: int = 25,
                   seed: int = 0, positive_below: bool = False,
                   gbdt_params: GbdtParams = GbdtParams(),
                   collect_shap: bool = False,
                   track_learning_curve: bool = False,
                   smote_k: int = 5) -> FoldResults:
    """Leave-one-compound-leaf-out classification.

    Per fold: scale on the training rows only, SMOTE the scaled training set,
    train the boosted classifier, then score the held-out leaf by averaging
    predicted probabilities over ``n_images`` randomly drawn rows (with
    replacement only when the leaf has fewer rows).
    """
    if n_images < 1:
        raise PipelineError("n_images must be at least 1")
    groups = sorted(set(ds.column("compound_leaf_id")))
    if len(groups) < 3:
        raise PipelineError("insufficient groups: need at least 3 compound leaves")
    labels = assign_labels(ds, threshold_ppm, positive_below)
    if len(np.unique(labels)) < 2:
        raise PipelineError("all leaves fall in one class at this threshold")
    X = ds.features(CLASSIFY_FEATURES)
    leaf_ids = ds.column("compound_leaf_id")
    children = np.random.SeedSequence(seed).spawn(len(groups))
    folds = []
    skipped = []
    shap_acc = np.zeros(len(CLASSIFY_FEATURES))
    shap_n = 0
    curves = []
    track = track_learning_curve
    for gi, group in enumerate(groups):
        test_mask = leaf_ids == group
        train_mask = ~test_mask
        y_train = labels[train_mask]
        if len(np.unique(y_train)) < 2:
            skipped.append(group)
            continue
        rng = np.random.default_rng(children[gi])
        scaler = fit_scaler(X[train_mask], CLASSIFY_FEATURES)
        X_train = scaler.transform(X[train_mask])
        smote_seed = int(rng.integers(1 << 31))
        X_bal, y_bal = smote(X_train, y_train, k=smote_k, seed=smote_seed)
        params = gbdt_params if not track else GbdtParams(
            **{**gbdt_params.__dict__, "track_pr_auc": True})
        model = gbdt_train(X_bal, y_bal, "logistic", params)
        if track and model.train_pr_auc:
            curves.append(model.train_pr_auc)
        test_rows = np.nonzero(test_mask)[0]
        replace = len(test_rows) < n_images
        draw = rng.choice(test_rows, size=n_images, replace=replace)
        X_test = scaler.transform(X[draw])
        z = model.predict_margin(X_test)
        probs = _sigmoid(z)
        prob = float(probs.mean())
        if collect_shap:
            bg = X_train if len(X_train) <= 100 else \
                X_train[rng.choice(len(X_train), 100, replace=False)]
            for row in X_test:
                phi, _ = shapley(model, row, bg)
                shap_acc += np.abs(phi)
                shap_n += 1
        folds.append(FoldRecord(
            group=str(group), y_true=int(labels[test_mask][0]), prob=prob,
            label_pred=int(prob >= 0.5), n_train=int(train_mask.sum()),
            n_test_rows=len(test_rows),
            scaler_mean=tuple(scaler.mean_), scaler_std=tuple(scaler.std_)))
    if not folds:
        raise PipelineError("every fold was skipped")
    y_true = np.array([f.y_true for f in folds])
    probs = np.array([f.prob for f in folds])
    preds = np.array([f.label_pred for f in folds])
    metrics = binary_metrics(y_true, probs, preds)
    curve = tuple(np.mean(np.array(curves), axis=0)) if curves else ()
    return FoldResults(
        folds=tuple(folds), skipped=tuple(skipped), metrics=metrics,
        threshold_ppm=threshold_ppm, n_images=n_images, seed=seed,
        shap_mean_abs=tuple(shap_acc / shap_n) if shap_n else (),
        learning_curve=curve)


@dataclass(frozen=True)
class RegressResults:
    rmse: float
    r2: float
    pearson_r: float
    n_folds: int
    skipped: tuple
    truths: tuple
    predictions: tuple
    seed: int


def loocv_regress(ds: Dataset, seed: int = 0,
                  gbdt_params: GbdtParams = GbdtParams()) -> RegressResults:
    """Leave-one-leaflet-out regression of NND on nitrate, resolution, and
    exposure time; features and target standard-scaled on the training side,
    predictions inverse-transformed before scoring."""
    groups = sorted(set(ds.column("leaflet_id")))
    if len(groups) < 3:
        raise PipelineError("insufficient groups: need at least 3 leaflets")
    X = ds.features(REGRESS_FEATURES)
    y = ds.column("nnd_mm")
    leaflet_ids = ds.column("leaflet_id")
    truths = []
    preds = []
    skipped = []
    for group in groups:
        test_mask = leaflet_ids == group
        train_mask = ~test_mask
        if int(train_mask.sum()) < 2 * gbdt_params.min_samples_leaf:
            skipped.append(group)
            continue
        xscaler = fit_scaler(X[train_mask], REGRESS_FEATURES)
        yscaler = fit_scaler(y[train_mask].reshape(-1, 1), ("nnd_mm",))
        model = gbdt_train(xscaler.transform(X[train_mask]),
                           yscaler.transform(y[train_mask].reshape(-1, 1)).ravel(),
                           "l2", gbdt_params)
        z = model.predict_margin(xscaler.transform(X[test_mask]))
        yhat = yscaler.inverse_transform(z.reshape(-1, 1)).ravel()
        truths.extend(y[test_mask].tolist())
        preds.extend(yhat.tolist())
    if not truths:
        raise PipelineError("every fold was skipped")
    t = np.array(truths)
    p = np.array(preds)
    rmse = float(np.sqrt(np.mean((t - p) ** 2)))
    ss_res = float(np.sum((t - p) ** 2))
    ss_tot = float(np.sum((t - t.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else float("nan")
    if t.std() > 0 and p.std() > 0:
        r = float(np.corrcoef(t, p)[0, 1])
    else:
        r = float("nan")
    return RegressResults(rmse=rmse, r2=r2, pearson_r=r, n_folds=len(groups),
                          skipped=tuple(skipped), truths=tuple(truths),
                          predictions=tuple(preds), seed=seed)


@dataclass(frozen=True)
class SweepCell:
    threshold_ppm: float
    n_images: int
    metrics: dict | None
    degenerate: bool
    reason: str = ""


@dataclass(frozen=True)
class SweepReport:
    cells: tuple
    mroc: dict          # n_images -> mean ROC-AUC over valid thresholds
    mpr: dict
    n_degenerate: int
    seed: int

    def cell(self, threshold, n_images):
        for c in self.cells:
            if c.threshold_ppm == threshold and c.n_images == n_images:
                return c
        raise KeyError((threshold, n_images))


def even_thresholds(lo: float, hi: float, n: int = 10):
    """n thresholds evenly spaced across [lo, hi], endpoints included."""
    return list(np.linspace(lo, hi, n))


def sweep(ds: Dataset, thresholds, n_images_list, seed: int = 0,
          positive_below: bool = False,
          gbdt_params: GbdtParams = GbdtParams()) -> SweepReport:
    """Grid of loocv_classify runs; mROC/mPR are the arithmetic means of the
    cell AUCs over thresholds at each n_images (degenerate cells excluded)."""
    cells = []
    n_deg = 0
    for t in thresholds:
        for n in n_images_list:
            try:
                res = loocv_classify(ds, t, n_images=n, seed=seed,
                                     positive_below=positive_below,
                                     gbdt_params=gbdt_params)
                cells.append(SweepCell(t, n, res.metrics, False))
            except PipelineError as e:
                cells.append(SweepCell(t, n, None, True, str(e)))
                n_deg += 1
    mroc = {}
    mpr = {}
    for n in n_images_list:
        rocs = [c.metrics["roc_auc"] for c in cells
                if c.n_images == n and not c.degenerate and c.metrics["roc_auc"] is not None]
        prs = [c.metrics["pr_auc"] for c in cells
               if c.n_images == n and not c.degenerate and c.metrics["pr_auc"] is not None]
        mroc[n] = float(np.mean(rocs)) if rocs else None
        mpr[n] = float(np.mean(prs)) if prs else None
    return SweepReport(cells=tuple(cells), mroc=mroc, mpr=mpr,
                       n_degenerate=n_deg, seed=seed)
