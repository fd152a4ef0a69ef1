"""Grayscale image carrier used by every pixel-level stage."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GrayImage:
    """2-D luminance grid, values in [0, 255] stored as float64.

    The array is row-major: ``pixels[y, x]``.
    """

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("GrayImage needs a non-empty 2-D pixel array")
        if not np.all(np.isfinite(px)):
            raise ValueError("GrayImage pixels must be finite")
        if px.min() < 0.0 or px.max() > 255.0:
            raise ValueError("GrayImage pixels must lie in [0, 255]")
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def from_array(cls, arr) -> "GrayImage":
        """Build from any array-like, clipping to [0, 255]."""
        return cls(np.clip(np.asarray(arr, dtype=np.float64), 0.0, 255.0))

    @classmethod
    def constant(cls, width: int, height: int, value: float) -> "GrayImage":
        return cls(np.full((height, width), float(value)))

    def to_u8(self) -> np.ndarray:
        """Quantize to uint8 (round half away from zero like camera output)."""
        return np.clip(np.floor(self.pixels + 0.5), 0, 255).astype(np.uint8)


def resize_bilinear(img: GrayImage, width: int, height: int) -> GrayImage:
    """Resize with bilinear sampling (pixel-center aligned)."""
    if width < 1 or height < 1:
        raise ValueError("target size must be positive")
    src = img.pixels
    sh, sw = src.shape
    if (sh, sw) == (height, width):
        return GrayImage(src.copy())
    # map output pixel centers into source pixel-center coordinates
    xs = (np.arange(width) + 0.5) * (sw / width) - 0.5
    ys = (np.arange(height) + 0.5) * (sh / height) - 0.5
    xs = np.clip(xs, 0, sw - 1)
    ys = np.clip(ys, 0, sh - 1)
    x0 = np.floor(xs).astype(int)
    y0 = np.floor(ys).astype(int)
    x1 = np.minimum(x0 + 1, sw - 1)
    y1 = np.minimum(y0 + 1, sh - 1)
    fx = xs - x0
    fy = ys - y0
    top = src[y0][:, x0] * (1 - fx) + src[y0][:, x1] * fx
    bot = src[y1][:, x0] * (1 - fx) + src[y1][:, x1] * fx
    out = top * (1 - fy)[:, None] + bot * fy[:, None]
    return GrayImage(np.clip(out, 0.0, 255.0))


def sample_bilinear(pixels: np.ndarray, xs: np.ndarray, ys: np.ndarray,
                    fill: float = 0.0) -> np.ndarray:
    """Sample ``pixels`` at float coordinates; out-of-bounds returns ``fill``."""
    h, w = pixels.shape
    inside = (xs >= 0) & (xs <= w - 1) & (ys >= 0) & (ys <= h - 1)
    xc = np.clip(xs, 0, w - 1)
    yc = np.clip(ys, 0, h - 1)
    x0 = np.floor(xc).astype(int)
    y0 = np.floor(yc).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xc - x0
    fy = yc - y0
    v = (pixels[y0, x0] * (1 - fx) * (1 - fy)
         + pixels[y0, x1] * fx * (1 - fy)
         + pixels[y1, x0] * (1 - fx) * fy
         + pixels[y1, x1] * fx * fy)
    return np.where(inside, v, fill)
