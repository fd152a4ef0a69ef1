"""Trichome density measurement and fertilization-recommendation toolkit."""

__version__ = "0.1.0"

from .image import GrayImage
from .fiducial import (MarkerDictionary, MarkerDetection, Homography, PaperLayout,
                       generate_dictionary, otsu_threshold, detect_markers,
                       estimate_homography, rectify)
from .imaging import (flat_field_correct, morph_open, segment_watershed,
                      extract_and_filter, ContourStats, TrichomeSet)
from .density import KdTree, mean_nnd, mean_nnd_brute, to_physical, DensityResult
from .metadata import CaptureMeta, parse_exif, scan_jpeg_app1, load_pgm, save_pgm
from .synth import SceneParams, SceneTruth, poisson_points, simulate_damage, \
    render_scene, appendix_study
from .pipeline import analyze_scene, AnalysisResult

__all__ = [
    "GrayImage",
    "MarkerDictionary", "MarkerDetection", "Homography", "PaperLayout",
    "generate_dictionary", "otsu_threshold", "detect_markers",
    "estimate_homography", "rectify",
    "flat_field_correct", "morph_open", "segment_watershed",
    "extract_and_filter", "ContourStats", "TrichomeSet",
    "KdTree", "mean_nnd", "mean_nnd_brute", "to_physical", "DensityResult",
    "CaptureMeta", "parse_exif", "scan_jpeg_app1", "load_pgm", "save_pgm",
    "SceneParams", "SceneTruth", "poisson_points", "simulate_damage",
    "render_scene", "appendix_study",
    "analyze_scene", "AnalysisResult",
    "__version__",
]
