"""Nonparametric tests and collinearity diagnostics.

Statistics and tie corrections are computed directly; only the chi-square
tail probability comes from scipy. Normal approximations are used throughout
(the exact-enumeration oracles live in the test suite).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2


class StatsError(ValueError):
    pass


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    n: tuple
    method: str

    def __post_init__(self):
        if not (0.0 <= self.p_value <= 1.0):
            raise StatsError("p-value out of [0, 1]")
        if not math.isfinite(self.statistic):
            raise StatsError("statistic must be finite")


def _normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def average_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties assigned their average rank."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values))
    sv = values[order]
    i = 0
    while i < len(sv):
        j = i
        while j + 1 < len(sv) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _tie_term(values: np.ndarray) -> float:
    """Sum of t^3 - t over tie groups."""
    _, counts = np.unique(values, return_counts=True)
    t = counts.astype(np.float64)
    return float(np.sum(t ** 3 - t))


def kruskal_wallis(groups) -> TestResult:
    """Kruskal-Wallis H with tie correction; p from chi-square, df = k - 1."""
    groups = [np.asarray(g, dtype=np.float64) for g in groups]
    if len(groups) < 2:
        raise StatsError("need at least 2 groups")
    if any(len(g) < 2 for g in groups):
        raise StatsError("each group needs at least 2 values")
    pooled = np.concatenate(groups)
    n_total = len(pooled)
    if n_total < 5:
        raise StatsError("need at least 5 values in total")
    ranks = average_ranks(pooled)
    h = 0.0
    start = 0
    for g in groups:
        r = ranks[start:start + len(g)]
        h += r.sum() ** 2 / len(g)
        start += len(g)
    h = 12.0 / (n_total * (n_total + 1)) * h - 3.0 * (n_total + 1)
    correction = 1.0 - _tie_term(pooled) / (n_total ** 3 - n_total)
    if correction <= 0.0:
        # every value identical: no evidence against the null
        return TestResult(0.0, 1.0, tuple(len(g) for g in groups), "kruskal-wallis")
    h /= correction
    h = max(h, 0.0)
    p = float(chi2.sf(h, len(groups) - 1))
    return TestResult(h, min(p, 1.0), tuple(len(g) for g in groups), "kruskal-wallis")


def mann_whitney_u(a, b) -> TestResult:
    """Two-sided Mann-Whitney U: normal approximation with tie and
    continuity corrections."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise StatsError("each sample needs at least 2 values")
    na, nb = len(a), len(b)
    pooled = np.concatenate([a, b])
    ranks = average_ranks(pooled)
    u_a = float(ranks[:na].sum()) - na * (na + 1) / 2.0
    mu = na * nb / 2.0
    n = na + nb
    var = na * nb / 12.0 * ((n + 1) - _tie_term(pooled) / (n * (n - 1)))
    if var <= 0.0:
        return TestResult(u_a, 1.0, (na, nb), "mann-whitney")
    z = (abs(u_a - mu) - 0.5) / math.sqrt(var)
    p = min(1.0, 2.0 * _normal_sf(max(z, 0.0)))
    return TestResult(u_a, p, (na, nb), "mann-whitney")


def mann_whitney_bonferroni(pairs):
    """Mann-Whitney U per pair with Bonferroni-adjusted p-values.

    Returns a list of (TestResult, adjusted_p).
    """
    results = [mann_whitney_u(a, b) for a, b in pairs]
    m = len(results)
    return [(r, min(1.0, r.p_value * m)) for r in results]


def wilcoxon_signed_rank(differences) -> TestResult:
    """Two-sided Wilcoxon signed-rank: zeros dropped, W = min rank sum,
    normal approximation with tie correction."""
    d = np.asarray(differences, dtype=np.float64)
    d = d[d != 0.0]
    if len(d) == 0:
        raise StatsError("degenerate pairing: all differences are zero")
    if len(d) < 6:
        raise StatsError("need at least 6 nonzero differences")
    n = len(d)
    ranks = average_ranks(np.abs(d))
    w_pos = float(ranks[d > 0].sum())
    w_neg = float(ranks[d < 0].sum())
    w = min(w_pos, w_neg)
    mu = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - _tie_term(np.abs(d)) / 48.0
    if var <= 0.0:
        return TestResult(w, 1.0, (n,), "wilcoxon-signed-rank")
    z = (w - mu) / math.sqrt(var)
    p = min(1.0, 2.0 * _normal_sf(-z))
    return TestResult(w, p, (n,), "wilcoxon-signed-rank")


VIF_CAP = 1e12


def vif(X):
    """Variance inflation factor per feature: 1 / (1 - R^2) of regressing the
    feature on the others with an intercept.

    Returns (vif_values, flagged) where flagged marks (near-)exact linear
    dependence reported at the cap.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise StatsError("X must be 2-D")
    n, d = X.shape
    if n < d + 2:
        raise StatsError("need at least features + 2 rows")
    out = np.zeros(d)
    flagged = np.zeros(d, dtype=bool)
    for j in range(d):
        y = X[:, j]
        others = np.delete(X, j, axis=1)
        design = np.column_stack([np.ones(n), others])
        beta, *_ = np.linalg.lstsq(design, y, rcond=None)
        resid = y - design @ beta
        sst = float(np.sum((y - y.mean()) ** 2))
        if sst <= 0.0:
            out[j] = VIF_CAP
            flagged[j] = True
            continue
        r2 = 1.0 - float(resid @ resid) / sst
        if r2 >= 1.0 - 1e-12:
            out[j] = VIF_CAP
            flagged[j] = True
        else:
            out[j] = 1.0 / (1.0 - r2)
    return out, flagged


def ols_line(x, y):
    """Slope and intercept of y ~ x by least squares (closed form)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) < 2:
        raise StatsError("need at least 2 points for a line fit")
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx == 0.0:
        raise StatsError("degenerate fit: x is constant")
    slope = float(np.sum((x - xm) * (y - ym))) / sxx
    return slope, ym - slope * xm


def stratified_ols(nitrate, nnd, resolution, cuts=(15.0, 85.0)):
    """Per-stratum OLS of nnd ~ nitrate, stratified on resolution percentiles.

    Strata: below the lower cut, between cuts (inclusive), above the upper
    cut. Strata with fewer than 3 rows are reported as absent (None).
    """
    nitrate = np.asarray(nitrate, dtype=np.float64)
    nnd = np.asarray(nnd, dtype=np.float64)
    resolution = np.asarray(resolution, dtype=np.float64)
    lo, hi = np.percentile(resolution, list(cuts))
    masks = {
        f"below_p{cuts[0]:g}": resolution < lo,
        f"p{cuts[0]:g}_to_p{cuts[1]:g}": (resolution >= lo) & (resolution <= hi),
        f"above_p{cuts[1]:g}": resolution > hi,
    }
    out = {}
    for name, mask in masks.items():
        if int(mask.sum()) < 3:
            out[name] = None
            continue
        slope, intercept = ols_line(nitrate[mask], nnd[mask])
        out[name] = {"slope": slope, "intercept": intercept, "n": int(mask.sum()),
                     "resolution_lo": float(lo), "resolution_hi": float(hi)}
    return out
