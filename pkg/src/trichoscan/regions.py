"""Boundary tracing and polygon helpers shared by the marker and trichome stages."""

from __future__ import annotations

import math

import numpy as np

# Moore neighborhood, clockwise in image coordinates (y down), starting west
_MOORE = [(0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1)]


def trace_boundary(mask: np.ndarray) -> np.ndarray:
    """Trace the outer 8-connected boundary of the foreground in ``mask``.

    Returns the closed chain of boundary pixels as an (n, 2) array of (y, x),
    in clockwise order (image coordinates), starting at the topmost-leftmost
    pixel. Uses Moore neighbor tracing with Jacob's stopping criterion. The
    mask must contain a single connected region.
    """
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    start = (int(ys[0]), int(xs[ys == ys[0]].min()))
    h, w = mask.shape

    def fg(p):
        y, x = p
        return 0 <= y < h and 0 <= x < w and mask[y, x]

    chain = [start]
    # backtrack starts west of the start pixel (guaranteed background)
    prev_dir = 0
    cur = start
    first_move = None
    while True:
        found = None
        for k in range(8):
            d = (prev_dir + k) % 8
            cand = (cur[0] + _MOORE[d][0], cur[1] + _MOORE[d][1])
            if fg(cand):
                found = (cand, d)
                break
        if found is None:
            break  # isolated pixel
        nxt, d = found
        if first_move is None:
            first_move = (nxt, d)
        elif cur == start and (nxt, d) == first_move:
            chain.pop()  # the revisit of start was appended last iteration
            break
        chain.append(nxt)
        cur = nxt
        # resume scan from the neighbor after the one we came from
        prev_dir = (d + 5) % 8
        if len(chain) > 4 * mask.size:
            raise RuntimeError("boundary trace failed to terminate")
    return np.asarray(chain, dtype=np.int64)


def chain_length(chain: np.ndarray) -> float:
    """Perimeter of a closed chain: unit steps plus sqrt(2) diagonals."""
    if len(chain) < 2:
        return 0.0
    nxt = np.roll(chain, -1, axis=0)
    diag = (chain[:, 0] != nxt[:, 0]) & (chain[:, 1] != nxt[:, 1])
    return float(np.count_nonzero(~diag) + math.sqrt(2.0) * np.count_nonzero(diag))


def shoelace_area(points: np.ndarray) -> float:
    """Absolute polygon area of a closed chain of (y, x) or (x, y) points."""
    if len(points) < 3:
        return 0.0
    a = np.asarray(points, dtype=np.float64)
    b = np.roll(a, -1, axis=0)
    return abs(float(np.sum(a[:, 1] * b[:, 0] - b[:, 1] * a[:, 0]))) / 2.0


def _point_segment_dist(pts, a, b):
    """Distances from pts (n, 2) to segment a-b."""
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.hypot(pts[:, 0] - a[0], pts[:, 1] - a[1])
    t = np.clip(((pts - a) @ ab) / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.hypot(pts[:, 0] - proj[:, 0], pts[:, 1] - proj[:, 1])


def _dp_open(points: np.ndarray, tol: float) -> list:
    """Douglas-Peucker on an open chain; returns kept indices (incl. ends)."""
    keep = [0, len(points) - 1]
    stack = [(0, len(points) - 1)]
    while stack:
        i, j = stack.pop()
        if j - i < 2:
            continue
        seg = points[i + 1:j]
        d = _point_segment_dist(seg.astype(np.float64),
                                points[i].astype(np.float64),
                                points[j].astype(np.float64))
        k = int(np.argmax(d))
        if d[k] > tol:
            mid = i + 1 + k
            keep.append(mid)
            stack.append((i, mid))
            stack.append((mid, j))
    return sorted(set(keep))


def simplify_closed(chain: np.ndarray, tol: float) -> np.ndarray:
    """Simplify a closed chain with Douglas-Peucker.

    The chain is split at its two mutually farthest vertices so the closed
    curve can be treated as two open runs.
    """
    n = len(chain)
    if n <= 3:
        return chain.copy()
    pts = chain.astype(np.float64)
    # farthest pair; O(n^2) but boundary chains here are a few thousand points
    besti, bestj, best = 0, n // 2, -1.0
    step = max(1, n // 512)
    for i in range(0, n, step):
        d = np.hypot(pts[:, 0] - pts[i, 0], pts[:, 1] - pts[i, 1])
        j = int(np.argmax(d))
        if d[j] > best:
            besti, bestj, best = i, j, float(d[j])
    i, j = sorted((besti, bestj))
    run1 = chain[i:j + 1]
    run2 = np.vstack([chain[j:], chain[:i + 1]])
    k1 = _dp_open(run1, tol)
    k2 = _dp_open(run2, tol)
    out = [run1[k] for k in k1[:-1]] + [run2[k] for k in k2[:-1]]
    return np.asarray(out, dtype=chain.dtype)


def is_strictly_convex_quad(corners: np.ndarray) -> bool:
    """True when 4 points form a strictly convex quadrilateral (either winding)."""
    if len(corners) != 4:
        return False
    c = np.asarray(corners, dtype=np.float64)
    signs = []
    for i in range(4):
        a, b, d = c[i], c[(i + 1) % 4], c[(i + 2) % 4]
        cross = (b[0] - a[0]) * (d[1] - b[1]) - (b[1] - a[1]) * (d[0] - b[0])
        if cross == 0.0:
            return False
        signs.append(cross > 0)
    return all(signs) or not any(signs)
