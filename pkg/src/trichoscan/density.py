"""Mean nearest-neighbor distance over centroid sets, k-d tree accelerated."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LEAF_SIZE = 16


class DensityError(ValueError):
    pass


@dataclass(frozen=True)
class DensityResult:
    nnd_px: float
    nnd_mm: float
    n_points: int
    scale_mm_per_px: float

    def __post_init__(self):
        if self.nnd_px < 0 or self.n_points < 2:
            raise DensityError("invalid density result")


class KdTree:
    """2-D k-d tree: median split on alternating axes, leaf size 16.

    Nearest-neighbor queries exclude the query point by index and break
    distance ties by the smallest point index, which makes results comparable
    with a brute-force scan exactly.
    """

    __slots__ = ("points", "_nodes")

    def __init__(self, points):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise DensityError("points must be an (N, 2) array")
        if not np.all(np.isfinite(pts)):
            raise DensityError("points must be finite")
        self.points = [(float(x), float(y)) for x, y in pts]
        # node: leaf -> ("L", [indices]); inner -> ("I", axis, split, left, right)
        self._nodes = []
        order = np.arange(len(self.points))
        if len(order):
            self._build(order, 0)

    def _build(self, idx, axis):
        if len(idx) <= LEAF_SIZE:
            self._nodes.append(("L", sorted(int(i) for i in idx)))
            return len(self._nodes) - 1
        coords = np.array([self.points[i][axis] for i in idx])
        mid = len(idx) // 2
        part = np.argpartition(coords, mid)
        split = float(coords[part[mid]])
        left_idx = idx[part[:mid]]
        right_idx = idx[part[mid:]]
        node_pos = len(self._nodes)
        self._nodes.append(None)  # patched below
        left = self._build(left_idx, 1 - axis)
        right = self._build(right_idx, 1 - axis)
        self._nodes[node_pos] = ("I", axis, split, left, right)
        return node_pos

    def nearest_excluding(self, qi: int):
        """Nearest neighbor of point ``qi`` (excluded); returns (distance, index)."""
        pts = self.points
        qx, qy = pts[qi]
        best_d2 = math.inf
        best_i = -1
        stack = [0]
        nodes = self._nodes
        while stack:
            ni = stack.pop()
            node = nodes[ni]
            if node[0] == "L":
                for i in node[1]:
                    if i == qi:
                        continue
                    px, py = pts[i]
                    dx = qx - px
                    dy = qy - py
                    d2 = dx * dx + dy * dy
                    if d2 < best_d2 or (d2 == best_d2 and i < best_i):
                        best_d2 = d2
                        best_i = i
                continue
            _, axis, split, left, right = node
            q = qx if axis == 0 else qy
            gap = q - split
            near, far = (right, left) if gap >= 0 else (left, right)
            # visit the far side on equality too, so index tie-breaking sees
            # equidistant points across the split plane
            if gap * gap <= best_d2:
                stack.append(far)
            stack.append(near)
        return math.sqrt(best_d2), best_i


def mean_nnd(points) -> float:
    """Mean Euclidean distance from each point to its nearest neighbor."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    if n < 2:
        raise DensityError("insufficient points: need at least 2")
    tree = KdTree(pts)
    total = 0.0
    for i in range(n):
        d, _ = tree.nearest_excluding(i)
        total += d
    return total / n


def mean_nnd_brute(points) -> float:
    """O(N^2) reference: same tie-breaking and accumulation order as mean_nnd."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    if n < 2:
        raise DensityError("insufficient points: need at least 2")
    total = 0.0
    block = 512
    for start in range(0, n, block):
        stop = min(start + block, n)
        dx = pts[start:stop, None, 0] - pts[None, :, 0]
        dy = pts[start:stop, None, 1] - pts[None, :, 1]
        d2 = dx * dx + dy * dy
        for row, i in enumerate(range(start, stop)):
            d2[row, i] = math.inf
        # argmin takes the first (= smallest-index) minimizer
        mins = np.sqrt(d2[np.arange(stop - start), np.argmin(d2, axis=1)])
        for v in mins:
            total += float(v)
    return total / n


def to_physical(nnd_px: float, opening_px: float, opening_mm: float = 12.0,
                n_points: int = 2) -> DensityResult:
    """Convert a pixel-space NND to physical units via the opening size."""
    if opening_px <= 0:
        raise DensityError("opening_px must be positive")
    scale = opening_mm / opening_px
    return DensityResult(nnd_px=float(nnd_px), nnd_mm=float(nnd_px) * scale,
                         n_points=int(n_points), scale_mm_per_px=scale)
