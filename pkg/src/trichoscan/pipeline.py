"""End-to-end measurement: image + metadata -> density record."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .image import GrayImage
from .metadata import CaptureMeta
from .fiducial import (MarkerDictionary, PaperLayout, otsu_threshold,
                       detect_markers, rectify, CANVAS_PX)
from .imaging import (flat_field_correct, morph_open, segment_watershed,
                      extract_and_filter, TrichomeSet)
from .density import mean_nnd, to_physical, DensityResult, DensityError

# inset applied when cropping the opening out of the rectified canvas, in
# canvas pixels: keeps the white paper rim out of the measurement crop
OPENING_INSET_PX = 4


@dataclass(frozen=True)
class AnalysisResult:
    density: DensityResult
    trichomes: TrichomeSet
    opening_px: float
    marker_threshold: int
    trichome_threshold: int
    meta: CaptureMeta

    def record_dict(self):
        return {
            "nnd_mm": self.density.nnd_mm,
            "nnd_px": self.density.nnd_px,
            "n_points": self.density.n_points,
            "opening_px": self.opening_px,
            "exposure_time": self.meta.exposure_time,
            "iso": self.meta.iso,
            "resolution": self.meta.width * self.meta.height,
        }


def crop_opening(corrected: GrayImage, opening_px: float,
                 inset_px: int = OPENING_INSET_PX) -> GrayImage:
    """Cut the centered opening out of the rectified canvas, inset on all sides."""
    c0 = int(round((CANVAS_PX - opening_px) / 2)) + inset_px
    c1 = int(round((CANVAS_PX + opening_px) / 2)) - inset_px
    if c1 - c0 < 8:
        raise DensityError("opening crop collapsed; check layout/inset")
    return GrayImage(corrected.pixels[c0:c1, c0:c1])


def analyze_scene(img: GrayImage, meta: CaptureMeta, layout: PaperLayout,
                  dictionary: MarkerDictionary,
                  opening_inset_px: int = OPENING_INSET_PX,
                  stage_sink=None) -> AnalysisResult:
    """Run markers -> rectify -> illumination -> noise removal -> watershed ->
    fences -> NND on one image.

    ``stage_sink``, when given, is called with (stage_name, GrayImage) after
    each intermediate stage (used by the CLI's debug dump).
    """
    marker_thr, binary = otsu_threshold(img)
    if stage_sink:
        stage_sink("binary", binary)
    detections = detect_markers(binary, dictionary)
    rectified, opening_px = rectify(img, detections, layout)
    if stage_sink:
        stage_sink("rectified", rectified)
    # illumination is corrected on the measurement crop: running Eq-style
    # correction over the full white-paper canvas multiplies the dark opening
    # by mean/F >> 1, clipping blobs and promoting halos above threshold
    crop = crop_opening(rectified, opening_px, opening_inset_px)
    crop_side = crop.width
    corrected = flat_field_correct(crop)
    if stage_sink:
        stage_sink("corrected", corrected)
    trichome_thr, crop_binary = otsu_threshold(corrected)
    opened = morph_open(crop_binary)
    if stage_sink:
        stage_sink("opened", opened)
    regions = segment_watershed(opened)
    # flat_field_correct resized the crop to its fixed working size
    scale = (layout.opening_side_mm / opening_px) * (crop_side / corrected.width)
    trichomes = extract_and_filter(regions, scale)
    # report NND in rectified-canvas pixel units
    pts_canvas = trichomes.points * (crop_side / corrected.width)
    nnd_px = mean_nnd(pts_canvas)
    density = to_physical(nnd_px, opening_px, layout.opening_side_mm,
                          n_points=trichomes.n_accepted)
    return AnalysisResult(
        density=density,
        trichomes=trichomes,
        opening_px=opening_px,
        marker_threshold=marker_thr,
        trichome_threshold=trichome_thr,
        meta=meta,
    )
