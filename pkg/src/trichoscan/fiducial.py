"""Square fiducial markers: detection, decoding, and perspective rectification.

Markers are 6x6-cell squares (1-cell black border around a 4x4 payload).
Payload bit (r, c) maps to bit index (r*4 + c) of a 16-bit code, value 1 =
white cell. The paper carries markers 0-3 at its corners; rectification warps
the paper to a fixed 1000x1000 canvas.
"""

from __future__ import annotations

import functools
import json
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .image import GrayImage, sample_bilinear
from . import regions

CANVAS_PX = 1000
DICTIONARY_SIZE = 250
MIN_ROTATIONAL_HAMMING = 4

# rotation-invariant payload masks are constant on the four 90-degree orbits
_ROT_ORBITS = ((0, 3, 15, 12), (1, 7, 14, 8), (2, 11, 13, 4), (5, 6, 10, 9))


class FiducialError(ValueError):
    pass


def otsu_threshold(img: GrayImage):
    """Otsu's threshold over the 256-bin histogram.

    Returns ``(threshold, binary)`` where binary pixels are 255 iff the source
    pixel is strictly above the threshold. A constant image yields its own
    value as threshold and an all-zero binary.
    """
    levels = np.clip(np.floor(img.pixels), 0, 255).astype(np.int64)
    hist = np.bincount(levels.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    occupied = np.nonzero(hist)[0]
    if occupied.size == 1:
        t = int(occupied[0])
        return t, GrayImage(np.zeros_like(img.pixels))
    w0 = np.cumsum(hist)
    w1 = total - w0
    moments = np.cumsum(hist * np.arange(256))
    mu_total = moments[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        mu0 = moments / w0
        mu1 = (mu_total - moments) / w1
        between = w0 * w1 * (mu0 - mu1) ** 2
    between = np.where(np.isfinite(between), between, 0.0)
    t = int(np.argmax(between))
    binary = np.where(img.pixels > t, 255.0, 0.0)
    return t, GrayImage(binary)


def rotate_code_cw(code: int) -> int:
    """Rotate a 16-bit 4x4 payload 90 degrees clockwise."""
    out = 0
    for r in range(4):
        for c in range(4):
            out |= ((code >> ((3 - c) * 4 + r)) & 1) << (r * 4 + c)
    return out


@functools.lru_cache(maxsize=1)
def _rotation_table():
    codes = np.arange(65536, dtype=np.uint32)
    rot = np.zeros(65536, dtype=np.uint32)
    for dst in range(16):
        src = (3 - (dst % 4)) * 4 + (dst // 4)
        rot |= (((codes >> src) & 1) << dst).astype(np.uint32)
    return rot


@functools.lru_cache(maxsize=1)
def _transpose_table():
    codes = np.arange(65536, dtype=np.uint32)
    out = np.zeros(65536, dtype=np.uint32)
    for r in range(4):
        for c in range(4):
            out |= (((codes >> (r * 4 + c)) & 1) << (c * 4 + r)).astype(np.uint32)
    return out


@functools.lru_cache(maxsize=1)
def _popcount_table():
    return np.array([bin(i).count("1") for i in range(65536)], dtype=np.uint8)


@dataclass(frozen=True)
class MarkerDictionary:
    """250 16-bit codes with pairwise rotational Hamming distance >= 4."""

    codes: tuple
    seed: int
    _lookup: dict = field(repr=False, compare=False, default_factory=dict)

    def __len__(self):
        return len(self.codes)

    def decode(self, payload: int):
        """Map an observed payload to (id, cw_rotations) or None."""
        return self._lookup.get(payload)

    def pattern(self, marker_id: int) -> np.ndarray:
        """4x4 bool payload grid (True = white cell)."""
        code = self.codes[marker_id]
        return np.array([[(code >> (r * 4 + c)) & 1 for c in range(4)]
                         for r in range(4)], dtype=bool)


@functools.lru_cache(maxsize=8)
def generate_dictionary(seed: int = 0) -> MarkerDictionary:
    """Deterministically generate the marker dictionary for ``seed``.

    Scans all 65536 codes in lexicographic order composed with a seed-chosen
    geometry-preserving transform (rotation-invariant XOR mask, optional
    transpose); purely random orders cannot pack 250 codes at distance 4.
    Accepted codes additionally have 4 distinct self-rotations and payload
    popcount in [4, 12] so orientation decoding is unambiguous and all-dark
    quads never decode.
    """
    rng = random.Random(seed)
    mask_bits = rng.getrandbits(4)
    use_transpose = bool(rng.getrandbits(1))
    mask = 0
    for orbit, bit in zip(_ROT_ORBITS, (mask_bits >> np.arange(4)) & 1):
        if bit:
            for pos in orbit:
                mask |= 1 << pos
    rot = _rotation_table()
    tr = _transpose_table()
    pop = _popcount_table()
    ball = np.nonzero(pop <= MIN_ROTATIONAL_HAMMING - 1)[0].astype(np.uint32)
    blocked = np.zeros(65536, dtype=bool)
    kept = []
    for i in range(65536):
        c = i ^ mask
        if use_transpose:
            c = int(tr[c])
        if blocked[c]:
            continue
        if not 4 <= pop[c] <= 12:
            continue
        r1 = int(rot[c]); r2 = int(rot[r1]); r3 = int(rot[r2])
        if len({c, r1, r2, r3}) < 4:
            continue
        kept.append(c)
        for rc in (c, r1, r2, r3):
            blocked[np.bitwise_xor(np.uint32(rc), ball)] = True
        if len(kept) == DICTIONARY_SIZE:
            break
    if len(kept) < DICTIONARY_SIZE:
        raise FiducialError(
            f"dictionary generation produced only {len(kept)} codes for seed {seed}")
    lookup = {}
    for mid, code in enumerate(kept):
        obs = code
        for k in range(4):
            lookup[obs] = (mid, k)
            obs = rotate_code_cw(obs)
    return MarkerDictionary(codes=tuple(kept), seed=seed, _lookup=lookup)


@dataclass(frozen=True)
class MarkerDetection:
    """Decoded marker: id plus 4 corners (x, y), clockwise from canonical top-left."""

    id: int
    corners: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.corners, dtype=np.float64)
        if c.shape != (4, 2):
            raise FiducialError("corners must be a 4x2 array")
        if not regions.is_strictly_convex_quad(c):
            raise FiducialError("corners must form a strictly convex quadrilateral")
        object.__setattr__(self, "corners", c)


@dataclass(frozen=True)
class Homography:
    """3x3 projective transform with m[2][2] == 1."""

    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=np.float64)
        if m.shape != (3, 3):
            raise FiducialError("homography must be 3x3")
        if abs(m[2, 2] - 1.0) > 1e-9:
            raise FiducialError("homography must be normalized to m[2][2] = 1")
        if abs(np.linalg.det(m)) <= 1e-12:
            raise FiducialError("homography is not invertible")
        object.__setattr__(self, "m", m)

    def apply(self, pts: np.ndarray) -> np.ndarray:
        p = np.asarray(pts, dtype=np.float64)
        squeeze = p.ndim == 1
        p = np.atleast_2d(p)
        hom = np.column_stack([p, np.ones(len(p))]) @ self.m.T
        out = hom[:, :2] / hom[:, 2:3]
        return out[0] if squeeze else out

    def inverse(self) -> "Homography":
        inv = np.linalg.inv(self.m)
        return Homography(inv / inv[2, 2])


def _normalize_points(pts):
    centroid = pts.mean(axis=0)
    d = np.hypot(*(pts - centroid).T)
    mean_d = d.mean()
    if mean_d <= 1e-12:
        raise FiducialError("degenerate configuration: coincident points")
    s = np.sqrt(2.0) / mean_d
    T = np.array([[s, 0, -s * centroid[0]],
                  [0, s, -s * centroid[1]],
                  [0, 0, 1.0]])
    return (pts - centroid) * s, T


def estimate_homography(src, dst) -> Homography:
    """Normalized DLT from >= 4 point correspondences (least squares for > 4)."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2:
        raise FiducialError("src and dst must be matching (N, 2) arrays")
    n = len(src)
    if n < 4:
        raise FiducialError("need at least 4 correspondences")
    sn, Ts = _normalize_points(src)
    dn, Td = _normalize_points(dst)
    A = np.zeros((2 * n, 9))
    x, y = sn[:, 0], sn[:, 1]
    u, v = dn[:, 0], dn[:, 1]
    A[0::2, 0] = -x; A[0::2, 1] = -y; A[0::2, 2] = -1
    A[0::2, 6] = u * x; A[0::2, 7] = u * y; A[0::2, 8] = u
    A[1::2, 3] = -x; A[1::2, 4] = -y; A[1::2, 5] = -1
    A[1::2, 6] = v * x; A[1::2, 7] = v * y; A[1::2, 8] = v
    _, sv, Vt = np.linalg.svd(A)
    if sv[-2] < 1e-10 * max(sv[0], 1e-300):
        raise FiducialError("degenerate configuration: rank-deficient system")
    Hn = Vt[-1].reshape(3, 3)
    H = np.linalg.inv(Td) @ Hn @ Ts
    if abs(H[2, 2]) < 1e-12:
        raise FiducialError("degenerate configuration: vanishing normalization")
    H = H / H[2, 2]
    if abs(np.linalg.det(H)) <= 1e-12:
        raise FiducialError("degenerate configuration: singular homography")
    return Homography(H)


@dataclass(frozen=True)
class PaperLayout:
    """Physical geometry of the measurement paper, all sizes in mm.

    Markers 0-3 sit at the paper's corners (top-left, top-right, bottom-right,
    bottom-left), each inset by ``marker_margin_mm``; the opening is centered.
    """

    marker_side_mm: float = 6.0
    paper_side_mm: float = 30.0
    opening_side_mm: float = 12.0
    marker_margin_mm: float = 1.5

    def __post_init__(self):
        if min(self.marker_side_mm, self.paper_side_mm, self.opening_side_mm) <= 0:
            raise FiducialError("layout dimensions must be positive")
        if self.marker_margin_mm < 0:
            raise FiducialError("marker margin cannot be negative")
        if self.marker_margin_mm + self.marker_side_mm > (self.paper_side_mm - self.opening_side_mm) / 2:
            raise FiducialError("markers would overlap the opening")

    @classmethod
    def from_json(cls, path) -> "PaperLayout":
        doc = json.loads(Path(path).read_text())
        return cls(
            marker_side_mm=float(doc["marker_side_mm"]),
            paper_side_mm=float(doc["paper_side_mm"]),
            opening_side_mm=float(doc["opening_side_mm"]),
            marker_margin_mm=float(doc["marker_margin_mm"]),
        )

    def marker_corners_mm(self, marker_id: int) -> np.ndarray:
        """Marker corners (x, y) mm, clockwise from the marker's top-left."""
        m, s, p = self.marker_margin_mm, self.marker_side_mm, self.paper_side_mm
        anchors = {
            0: (m, m),
            1: (p - m - s, m),
            2: (p - m - s, p - m - s),
            3: (m, p - m - s),
        }
        if marker_id not in anchors:
            raise FiducialError(f"layout has no marker {marker_id}")
        ax, ay = anchors[marker_id]
        return np.array([[ax, ay], [ax + s, ay], [ax + s, ay + s], [ax, ay + s]])

    def opening_bounds_mm(self):
        lo = (self.paper_side_mm - self.opening_side_mm) / 2
        return lo, lo + self.opening_side_mm

    @property
    def opening_px(self) -> float:
        return self.opening_side_mm / self.paper_side_mm * CANVAS_PX

    @property
    def canvas_px_per_mm(self) -> float:
        return CANVAS_PX / self.paper_side_mm


def _fit_edge_line(pts):
    """Total-least-squares line through boundary points: (point, direction)."""
    c = pts.mean(axis=0)
    d = pts - c
    w, v = np.linalg.eigh(d.T @ d)
    return c, v[:, int(np.argmax(w))]


def _intersect_lines(p1, d1, p2, d2):
    A = np.column_stack([d1, -d2])
    if abs(np.linalg.det(A)) < 1e-12:
        return None
    t, _ = np.linalg.solve(A, p2 - p1)
    return p1 + t * d1


def _refine_corners(chain_xy, corner_idx, quad_centroid):
    """Sub-pixel corners from edge line fits, offset 0.5 px toward the outside
    (boundary pixel centers sit half a pixel inside the true dark region edge)."""
    lines = []
    n = len(chain_xy)
    for e in range(4):
        i0, i1 = corner_idx[e], corner_idx[(e + 1) % 4]
        idx = np.arange(i0, i1 + 1) if i1 > i0 else np.concatenate(
            [np.arange(i0, n), np.arange(0, i1 + 1)])
        m = len(idx)
        trim = max(1, m // 8)
        idx = idx[trim:m - trim]
        if len(idx) < 2:
            return None
        pts = chain_xy[idx]
        c, d = _fit_edge_line(pts)
        normal = np.array([-d[1], d[0]])
        if normal @ (c - quad_centroid) < 0:
            normal = -normal
        lines.append((c + 0.5 * normal, d))
    corners = []
    for e in range(4):
        p_prev, d_prev = lines[(e - 1) % 4]
        p_cur, d_cur = lines[e]
        pt = _intersect_lines(p_prev, d_prev, p_cur, d_cur)
        if pt is None:
            return None
        corners.append(pt)
    return np.asarray(corners)


def _sample_cells(binary_px, corners):
    """Decode the 6x6 cell grid: mean of the central third of each cell > 128."""
    cell_square = np.array([[0, 0], [6, 0], [6, 6], [0, 6]], dtype=np.float64)
    try:
        H = estimate_homography(cell_square, corners)
    except FiducialError:
        return None
    offs = 1.0 / 3.0 + (np.arange(3) + 0.5) / 9.0
    gx, gy = np.meshgrid(offs, offs)
    cells = np.zeros((6, 6), dtype=bool)
    base_c, base_r = np.meshgrid(np.arange(6), np.arange(6))
    pts = np.stack([
        (base_c.ravel()[:, None] + gx.ravel()[None, :]).ravel(),
        (base_r.ravel()[:, None] + gy.ravel()[None, :]).ravel(),
    ], axis=1)
    img_pts = H.apply(pts)
    vals = sample_bilinear(binary_px, img_pts[:, 0], img_pts[:, 1], fill=0.0)
    means = vals.reshape(36, 9).mean(axis=1)
    cells = (means > 128.0).reshape(6, 6)
    return cells


def detect_markers(binary: GrayImage, dictionary: MarkerDictionary,
                   min_area_px: int = 100):
    """Detect and decode markers in a binarized image.

    Candidate quads come from border-following on dark connected components,
    simplified to 4 vertices with Douglas-Peucker at 2% of the perimeter.
    Returns a list of MarkerDetection; an image without markers yields [].
    """
    px = binary.pixels
    vals = np.unique(px)
    if not np.all(np.isin(vals, (0.0, 255.0))):
        raise FiducialError("detect_markers expects a binary image with values {0, 255}")
    dark = px < 128
    labels, n = ndimage.label(dark, structure=np.ones((3, 3), dtype=int))
    if n == 0:
        return []
    detections = []
    slices = ndimage.find_objects(labels)
    h, w = dark.shape
    for comp, sl in enumerate(slices, start=1):
        if sl is None:
            continue
        ys, xs = sl
        if ys.start == 0 or xs.start == 0 or ys.stop == h or xs.stop == w:
            continue  # touches the frame border: background or clipped marker
        if (ys.stop - ys.start) * (xs.stop - xs.start) < min_area_px:
            continue
        sub = labels[sl] == comp
        if int(sub.sum()) < min_area_px:
            continue
        chain = regions.trace_boundary(sub)
        if len(chain) < 16:
            continue
        chain = chain + np.array([ys.start, xs.start])
        perim = regions.chain_length(chain)
        keep_idx = _simplify_to_indices(chain, 0.02 * perim)
        if keep_idx is None:
            continue
        chain_xy = chain[:, ::-1].astype(np.float64)  # (y, x) -> (x, y)
        rough = chain_xy[keep_idx]
        if not regions.is_strictly_convex_quad(rough):
            continue
        centroid = rough.mean(axis=0)
        corners = _refine_corners(chain_xy, keep_idx, centroid)
        if corners is None or not regions.is_strictly_convex_quad(corners):
            corners = rough
        cells = _sample_cells(px, corners)
        if cells is None:
            continue
        border = np.concatenate([cells[0, :], cells[5, :], cells[1:5, 0], cells[1:5, 5]])
        if border.any():
            continue  # border cells must all decode black
        payload = 0
        for r in range(4):
            for c in range(4):
                if cells[r + 1, c + 1]:
                    payload |= 1 << (r * 4 + c)
        hit = dictionary.decode(payload)
        if hit is None:
            continue
        mid, k = hit
        ordered = np.roll(corners, -k, axis=0)
        detections.append(MarkerDetection(id=mid, corners=ordered))
    return detections


def _simplify_to_indices(chain, tol):
    """Closed-chain Douglas-Peucker returning exactly 4 vertex indices, or None."""
    n = len(chain)
    pts = chain.astype(np.float64)
    step = max(1, n // 512)
    besti, bestj, best = 0, n // 2, -1.0
    for i in range(0, n, step):
        d = np.hypot(pts[:, 0] - pts[i, 0], pts[:, 1] - pts[i, 1])
        j = int(np.argmax(d))
        if d[j] > best:
            besti, bestj, best = i, j, float(d[j])
    i, j = sorted((besti, bestj))
    idx1 = np.arange(i, j + 1)
    idx2 = np.concatenate([np.arange(j, n), np.arange(0, i + 1)])
    k1 = regions._dp_open(chain[idx1], tol)
    k2 = regions._dp_open(chain[idx2], tol)
    keep = sorted(set(int(idx1[k]) for k in k1[:-1]) | set(int(idx2[k] % n) for k in k2[:-1]))
    if len(keep) != 4:
        return None
    return np.asarray(keep, dtype=int)


def rectify(img: GrayImage, markers, layout: PaperLayout):
    """Warp the paper region onto the fixed square canvas.

    Requires all four corner-marker ids exactly once. Returns the rectified
    1000x1000 image and the opening side length in canvas pixels (exact from
    the layout geometry).
    """
    by_id = {}
    for det in markers:
        by_id.setdefault(det.id, []).append(det)
    src = []
    dst = []
    for mid in (0, 1, 2, 3):
        found = by_id.get(mid, [])
        if not found:
            raise FiducialError(f"marker {mid} not found")
        if len(found) > 1:
            raise FiducialError(f"marker {mid} detected more than once")
        src.append(layout.marker_corners_mm(mid) * layout.canvas_px_per_mm)
        dst.append(found[0].corners)
    H = estimate_homography(np.vstack(src), np.vstack(dst))  # canvas -> image
    grid_x, grid_y = np.meshgrid(np.arange(CANVAS_PX, dtype=np.float64),
                                 np.arange(CANVAS_PX, dtype=np.float64))
    pts = np.column_stack([grid_x.ravel(), grid_y.ravel()])
    mapped = H.apply(pts)
    sampled = sample_bilinear(img.pixels, mapped[:, 0], mapped[:, 1], fill=0.0)
    out = sampled.reshape(CANVAS_PX, CANVAS_PX)
    return GrayImage(np.clip(out, 0, 255)), layout.opening_px
