"""Rectified image to filtered trichome contours: illumination correction,
noise removal, watershed splitting, and population-fence filtering."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .image import GrayImage, resize_bilinear
from . import regions

FLAT_FIELD_SIZE = 1000
FLAT_FIELD_KERNEL = 50
MIN_TRICHOME_UM = 10.0


class ImagingError(ValueError):
    pass


def _box_mean_partial(px: np.ndarray, kernel: int) -> np.ndarray:
    """Box mean with offsets -k//2..k//2 counting only in-bounds pixels.

    Uses an integral image; matches a direct per-pixel window average exactly
    up to float summation order.
    """
    r = kernel // 2
    h, w = px.shape
    integral = np.zeros((h + 1, w + 1))
    integral[1:, 1:] = np.cumsum(np.cumsum(px, axis=0), axis=1)
    ys = np.arange(h)
    xs = np.arange(w)
    y0 = np.clip(ys - r, 0, h)[:, None]
    y1 = np.clip(ys + r + 1, 0, h)[:, None]
    x0 = np.clip(xs - r, 0, w)[None, :]
    x1 = np.clip(xs + r + 1, 0, w)[None, :]
    total = (integral[y1, x1] - integral[y0, x1] - integral[y1, x0] + integral[y0, x0])
    count = (y1 - y0) * (x1 - x0)
    return total / count


def flat_field_correct(img: GrayImage) -> GrayImage:
    """Divide out the smoothed illumination pattern: C = R * m / F.

    The input is resized to 1000x1000, F is a 50-px box mean with
    partial-window normalization at the borders, and m is the mean luminance
    of the resized image. Output clamped to [0, 255]; pixels where F = 0 are
    set to m.
    """
    resized = resize_bilinear(img, FLAT_FIELD_SIZE, FLAT_FIELD_SIZE)
    r = resized.pixels
    f = _box_mean_partial(r, FLAT_FIELD_KERNEL)
    m = float(r.mean())
    with np.errstate(divide="ignore", invalid="ignore"):
        c = r * m / f
    c = np.where(f == 0.0, m, c)
    return GrayImage(np.clip(c, 0.0, 255.0))


def _erode3(mask: np.ndarray) -> np.ndarray:
    """3x3 binary erosion, out-of-bounds treated as background."""
    padded = np.pad(mask, 1, mode="constant", constant_values=False)
    out = np.ones_like(mask)
    for dy in (0, 1, 2):
        for dx in (0, 1, 2):
            out &= padded[dy:dy + mask.shape[0], dx:dx + mask.shape[1]]
    return out


def _dilate3(mask: np.ndarray) -> np.ndarray:
    padded = np.pad(mask, 1, mode="constant", constant_values=False)
    out = np.zeros_like(mask)
    for dy in (0, 1, 2):
        for dx in (0, 1, 2):
            out |= padded[dy:dy + mask.shape[0], dx:dx + mask.shape[1]]
    return out


def morph_open(binary: GrayImage) -> GrayImage:
    """Morphological opening, one iteration of a 3x3 all-ones element."""
    px = binary.pixels
    if not np.all(np.isin(np.unique(px), (0.0, 255.0))):
        raise ImagingError("morph_open expects a binary image with values {0, 255}")
    mask = px > 128
    opened = _dilate3(_erode3(mask))
    return GrayImage(np.where(opened, 255.0, 0.0))


def chebyshev_distance_transform(mask: np.ndarray) -> np.ndarray:
    """Chebyshev distance to the background (off-image counts as background).

    Computed as the number of 3x3 erosions a pixel survives, which is exact
    for the Chebyshev metric.
    """
    dt = np.zeros(mask.shape, dtype=np.int32)
    cur = mask.copy()
    while cur.any():
        dt += cur
        cur = _erode3(cur)
    return dt


@dataclass(frozen=True)
class LabeledRegion:
    """One watershed region: pixel coordinates within the source image."""

    label: int
    ys: np.ndarray
    xs: np.ndarray
    source_shape: tuple

    @property
    def size(self) -> int:
        return len(self.ys)


def _regional_maxima(mask: np.ndarray, dt: np.ndarray) -> np.ndarray:
    """Regional maxima of the distance transform: connected plateaus whose
    in-mask neighbors are all strictly lower."""
    from scipy import ndimage

    h, w = dt.shape
    padded = np.pad(dt, 1, mode="constant", constant_values=0)
    neigh_max = np.zeros_like(dt)
    for dy in (0, 1, 2):
        for dx in (0, 1, 2):
            if dy == 1 and dx == 1:
                continue
            neigh_max = np.maximum(neigh_max, padded[dy:dy + h, dx:dx + w])
    out = np.zeros_like(mask)
    structure = np.ones((3, 3), dtype=int)
    for v in range(1, int(dt.max()) + 1):
        level = dt == v
        if not level.any():
            continue
        labels, n = ndimage.label(level, structure=structure)
        if n == 0:
            continue
        # a plateau survives iff none of its pixels sees a greater neighbor
        worst = ndimage.maximum(neigh_max, labels, index=np.arange(1, n + 1))
        good = np.nonzero(np.atleast_1d(worst) <= v)[0] + 1
        if len(good):
            out |= np.isin(labels, good)
    return out


def _cluster_maxima(maxima_yx):
    """Union regional maxima lying within Chebyshev distance 2 of each other."""
    parent = list(range(len(maxima_yx)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    index = {(int(y), int(x)): i for i, (y, x) in enumerate(maxima_yx)}
    for i, (y, x) in enumerate(maxima_yx):
        for dy in range(-2, 3):
            for dx in range(-2, 3):
                j = index.get((int(y) + dy, int(x) + dx))
                if j is not None and j != i:
                    ra, rb = find(i), find(j)
                    if ra != rb:
                        parent[rb] = ra
    roots = {}
    cluster = np.zeros(len(maxima_yx), dtype=np.int64)
    for i in range(len(maxima_yx)):
        r = find(i)
        if r not in roots:
            roots[r] = len(roots) + 1
        cluster[i] = roots[r]
    return cluster, len(roots)


def segment_watershed(binary: GrayImage):
    """Marker-controlled watershed over the Chebyshev distance transform.

    Regional maxima (merged within radius 2) seed a flood by descending
    distance through a priority queue; every foreground pixel gets exactly
    one label. Returns a list of LabeledRegion (empty for empty foreground).
    """
    px = binary.pixels
    if not np.all(np.isin(np.unique(px), (0.0, 255.0))):
        raise ImagingError("segment_watershed expects a binary image with values {0, 255}")
    mask = px > 128
    if not mask.any():
        return []
    dt = chebyshev_distance_transform(mask)
    h, w = dt.shape
    maxima = _regional_maxima(mask, dt)
    mys, mxs = np.nonzero(maxima)
    maxima_yx = np.column_stack([mys, mxs])
    cluster, n_clusters = _cluster_maxima(maxima_yx)

    labels = np.zeros(dt.shape, dtype=np.int64)
    heap = []
    counter = 0
    for (y, x), lab in zip(maxima_yx, cluster):
        labels[y, x] = lab
        heapq.heappush(heap, (-int(dt[y, x]), counter, int(y), int(x)))
        counter += 1
    offsets = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
    while heap:
        _, _, y, x = heapq.heappop(heap)
        lab = labels[y, x]
        for dy, dx in offsets:
            ny, nx = y + dy, x + dx
            if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and labels[ny, nx] == 0:
                labels[ny, nx] = lab
                heapq.heappush(heap, (-int(dt[ny, nx]), counter, ny, nx))
                counter += 1
    fys, fxs = np.nonzero(labels)
    vals = labels[fys, fxs]
    order = np.argsort(vals, kind="stable")
    fys, fxs, vals = fys[order], fxs[order], vals[order]
    bounds = np.searchsorted(vals, np.arange(1, n_clusters + 2))
    out = []
    for lab in range(1, n_clusters + 1):
        a, b = bounds[lab - 1], bounds[lab]
        if b > a:
            out.append(LabeledRegion(label=lab, ys=fys[a:b], xs=fxs[a:b],
                                     source_shape=dt.shape))
    return out


@dataclass(frozen=True)
class ContourStats:
    centroid: tuple          # (x, y) sub-pixel
    area: float              # boundary-polygon area, px^2
    perimeter: float         # 8-connected chain length, sqrt(2) diagonals
    circularity: float       # 4*pi*A / P^2

    def __post_init__(self):
        if not (self.area > 0 and self.perimeter > 0):
            raise ImagingError("degenerate contour stats")
        if not (0 < self.circularity <= 1.1):
            raise ImagingError(f"circularity {self.circularity} out of range")


@dataclass(frozen=True)
class TrichomeSet:
    """Centroids that passed every morphological fence."""

    points: np.ndarray       # (N, 2) of (x, y)
    source_dims: tuple       # (width, height)
    n_accepted: int
    n_rejected: int
    fences_applied: bool     # False when < 4 regions made fences undefined


def region_stats(region: LabeledRegion):
    """ContourStats for one region, or None when its boundary polygon is
    degenerate (single pixels and 1-px lines have zero enclosed area)."""
    y0, x0 = int(region.ys.min()), int(region.xs.min())
    sub = np.zeros((int(region.ys.max()) - y0 + 3, int(region.xs.max()) - x0 + 3), dtype=bool)
    sub[region.ys - y0 + 1, region.xs - x0 + 1] = True
    chain = regions.trace_boundary(sub)
    perimeter = regions.chain_length(chain)
    area = regions.shoelace_area(chain)
    if area <= 0.0 or perimeter <= 0.0:
        return None
    cx = float(region.xs.mean())
    cy = float(region.ys.mean())
    # 4*pi*A <= P^2 holds for any closed chain (isoperimetric inequality),
    # so circularity never exceeds 1 with polygon area and chain perimeter.
    circ = 4.0 * math.pi * area / (perimeter * perimeter)
    return ContourStats(centroid=(cx, cy), area=area, perimeter=perimeter,
                        circularity=circ)


def extract_and_filter(region_list, scale_mm_per_px: float,
                       min_size_um: float = MIN_TRICHOME_UM) -> TrichomeSet:
    """Compute per-region stats and keep centroids inside the population fences.

    Regions below the minimum physical size (equivalent diameter) and regions
    with degenerate boundary polygons are dropped before fences are computed.
    Area and perimeter use both Tukey fences [Q1 - 1.5 IQR, Q3 + 1.5 IQR];
    circularity uses only the lower fence. With fewer than 4 surviving regions
    the fences are undefined and everything is accepted (flagged).
    """
    if scale_mm_per_px <= 0:
        raise ImagingError("scale must be positive")
    min_d_px = (min_size_um / 1000.0) / scale_mm_per_px
    shape = None
    stats = []
    n_rejected = 0
    for region in region_list:
        shape = region.source_shape
        d_eq = 2.0 * math.sqrt(region.size / math.pi)
        if d_eq < min_d_px:
            n_rejected += 1
            continue
        st = region_stats(region)
        if st is None:
            n_rejected += 1
            continue
        stats.append(st)
    dims = (shape[1], shape[0]) if shape is not None else (0, 0)
    if len(stats) < 4:
        pts = np.array([s.centroid for s in stats], dtype=np.float64).reshape(-1, 2)
        return TrichomeSet(points=pts, source_dims=dims, n_accepted=len(stats),
                           n_rejected=n_rejected, fences_applied=False)
    areas = np.array([s.area for s in stats])
    perims = np.array([s.perimeter for s in stats])
    circs = np.array([s.circularity for s in stats])
    lo_a, hi_a = _tukey_fences(areas)
    lo_p, hi_p = _tukey_fences(perims)
    lo_c, _ = _tukey_fences(circs)
    accepted = []
    for s in stats:
        ok = (lo_a <= s.area <= hi_a and lo_p <= s.perimeter <= hi_p
              and s.circularity >= lo_c)
        if ok:
            accepted.append(s.centroid)
        else:
            n_rejected += 1
    pts = np.array(accepted, dtype=np.float64).reshape(-1, 2)
    return TrichomeSet(points=pts, source_dims=dims, n_accepted=len(accepted),
                       n_rejected=n_rejected, fences_applied=True)


def _tukey_fences(values):
    q1, q3 = np.percentile(values, [25.0, 75.0])  # linear interpolation (Type-7)
    iqr = q3 - q1
    return q1 - 1.5 * iqr, q3 + 1.5 * iqr
