import numpy as np
import pytest

from trichoscan.ml.dataset import SampleRecord, Dataset


def build_dataset(n_leaves=12, rows_per_leaf=30, nnd_of=None, seed=0,
                  nitrate_of=None, fertilizer_of=None):
    """Synthetic tabular dataset with the leaf hierarchy the pipelines expect."""
    rng = np.random.default_rng(seed)
    if nitrate_of is None:
        nitrate_of = lambda leaf: 1000.0 + 100.0 * leaf
    if nnd_of is None:
        nnd_of = lambda nitrate, r: 0.2 + 0.0004 * nitrate + r.normal(0.0, 0.01)
    records = []
    for leaf in range(n_leaves):
        nitrate = float(nitrate_of(leaf))
        level = fertilizer_of(leaf) if fertilizer_of else ""
        for i in range(rows_per_leaf):
            records.append(SampleRecord(
                plant_id=f"p{leaf // 2}",
                compound_leaf_id=f"L{leaf:02d}",
                leaflet_id=f"L{leaf:02d}_l{i % 5}",
                nnd_mm=float(max(nnd_of(nitrate, rng), 1e-3)),
                resolution_px=float(rng.uniform(4e5, 1.4e6)),
                exposure_time_s=float(rng.uniform(0.01, 0.03)),
                iso=float(rng.choice([100, 200, 400, 800])),
                nitrate_ppm=nitrate,
                fertilizer_level=level,
            ))
    return Dataset(records=tuple(records))


@pytest.fixture(scope="session")
def monotone_dataset():
    return build_dataset()


@pytest.fixture(scope="session")
def marker_dictionary():
    from trichoscan.fiducial import generate_dictionary
    return generate_dictionary(0)
