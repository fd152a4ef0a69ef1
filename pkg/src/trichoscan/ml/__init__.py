"""Fertilization-requirement classifier and density regressor."""

from .dataset import SampleRecord, Dataset, read_dataset_csv, write_dataset_csv, DatasetError
from .preprocess import Scaler, smote, PreprocessError
from .gbdt import GbdtModel, GbdtParams, gbdt_train, gbdt_predict, GbdtError
from .metrics import binary_metrics, roc_points, pr_points, confusion_matrix, MetricsError
from .shapley import shapley
from .pipeline import (loocv_classify, loocv_regress, sweep, FoldResults,
                       RegressResults, SweepReport, PipelineError)

__all__ = [
    "SampleRecord", "Dataset", "read_dataset_csv", "write_dataset_csv", "DatasetError",
    "Scaler", "smote", "PreprocessError",
    "GbdtModel", "GbdtParams", "gbdt_train", "gbdt_predict", "GbdtError",
    "binary_metrics", "roc_points", "pr_points", "confusion_matrix", "MetricsError",
    "shapley",
    "loocv_classify", "loocv_regress", "sweep", "FoldResults", "RegressResults",
    "SweepReport", "PipelineError",
]
