"""Tabular dataset of per-image measurements with leaf hierarchy metadata.

CSV schema (header required, extra ``fertilizer_level`` column optional):
plant_id,compound_leaf_id,leaflet_id,nnd_mm,resolution_px,exposure_time_s,iso,nitrate_ppm
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

REQUIRED_COLUMNS = ("plant_id", "compound_leaf_id", "leaflet_id", "nnd_mm",
                    "resolution_px", "exposure_time_s", "iso", "nitrate_ppm")

CLASSIFY_FEATURES = ("nnd_mm", "resolution_px", "exposure_time_s")
REGRESS_FEATURES = ("nitrate_ppm", "resolution_px", "exposure_time_s")


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class SampleRecord:
    plant_id: str
    compound_leaf_id: str
    leaflet_id: str
    nnd_mm: float
    resolution_px: float
    exposure_time_s: float
    iso: float
    nitrate_ppm: float
    fertilizer_level: str = ""

    def __post_init__(self):
        if not self.nnd_mm > 0:
            raise DatasetError("nnd_mm must be positive")
        if not self.resolution_px > 0:
            raise DatasetError("resolution_px must be positive")
        if not self.exposure_time_s > 0:
            raise DatasetError("exposure_time_s must be positive")
        if self.nitrate_ppm < 0:
            raise DatasetError("nitrate_ppm cannot be negative")


@dataclass(frozen=True)
class Dataset:
    records: tuple

    def __post_init__(self):
        by_leaf = {}
        for r in self.records:
            by_leaf.setdefault(r.compound_leaf_id, set()).add(r.nitrate_ppm)
        for leaf, vals in by_leaf.items():
            if len(vals) > 1:
                raise DatasetError(
                    f"nitrate_ppm varies within compound leaf {leaf!r}: {sorted(vals)}")

    def __len__(self):
        return len(self.records)

    def features(self, names) -> np.ndarray:
        return np.array([[getattr(r, n) for n in names] for r in self.records])

    def column(self, name) -> np.ndarray:
        vals = [getattr(r, name) for r in self.records]
        if name in ("plant_id", "compound_leaf_id", "leaflet_id", "fertilizer_level"):
            return np.array(vals, dtype=object)
        return np.array(vals, dtype=np.float64)

    def leaf_nitrate(self) -> dict:
        return {r.compound_leaf_id: r.nitrate_ppm for r in self.records}


def read_dataset_csv(path) -> Dataset:
    """Load and validate a dataset CSV; errors cite row number and column."""
    path = Path(path)
    records = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DatasetError(f"{path}: empty file")
        missing = [c for c in REQUIRED_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise DatasetError(f"{path}: missing columns {missing}")
        for i, row in enumerate(reader, start=2):
            vals = {}
            for col in ("nnd_mm", "resolution_px", "exposure_time_s", "iso", "nitrate_ppm"):
                raw = row.get(col, "")
                try:
                    vals[col] = float(raw)
                except (TypeError, ValueError):
                    raise DatasetError(
                        f"{path}: row {i}, column {col}: not a number: {raw!r}") from None
            try:
                records.append(SampleRecord(
                    plant_id=row["plant_id"],
                    compound_leaf_id=row["compound_leaf_id"],
                    leaflet_id=row["leaflet_id"],
                    fertilizer_level=row.get("fertilizer_level", "") or "",
                    **vals))
            except DatasetError as e:
                raise DatasetError(f"{path}: row {i}: {e}") from None
    if not records:
        raise DatasetError(f"{path}: no data rows")
    return Dataset(records=tuple(records))


def write_dataset_csv(path, records, include_fertilizer=False) -> None:
    header = list(REQUIRED_COLUMNS) + (["fertilizer_level"] if include_fertilizer else [])
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in records:
            row = [r.plant_id, r.compound_leaf_id, r.leaflet_id, repr(r.nnd_mm),
                   repr(r.resolution_px), repr(r.exposure_time_s), repr(r.iso),
                   repr(r.nitrate_ppm)]
            if include_fertilizer:
                row.append(r.fertilizer_level)
            w.writerow(row)


def append_dataset_row(path, record: SampleRecord) -> None:
    """Append one row, writing the header if the file does not exist yet."""
    path = Path(path)
    new = not path.exists()
    with path.open("a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(REQUIRED_COLUMNS)
        w.writerow([record.plant_id, record.compound_leaf_id, record.leaflet_id,
                    repr(record.nnd_mm), repr(record.resolution_px),
                    repr(record.exposure_time_s), repr(record.iso),
                    repr(record.nitrate_ppm)])
