import numpy as np
import pytest

from nidskit import kdd_data, synth
from nidskit.rng import stream

COLUMNS = kdd_data.COLUMN_NAMES


@pytest.fixture(scope="session")
def dataset_file(tmp_path_factory):
    """The benchmark 10% file when available, else a deterministic surrogate.

    Returns (path, is_real).  Point NIDS_DATA_DIR at a directory holding
    kddcup.data_10_percent to run the data-dependent tests against the
    published file.
    """
    real = kdd_data.find_dataset()
    if real is not None:
        return real, True
    path = tmp_path_factory.mktemp("data") / "surrogate_kdd.txt"
    synth.write_surrogate(path, n_rows=30000, seed=20240)
    return path, False


@pytest.fixture(scope="session")
def dataset(dataset_file):
    path, _ = dataset_file
    return kdd_data.load_dataset(path)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """A fast 3000-row surrogate for unit-level pipeline tests."""
    path = tmp_path_factory.mktemp("data") / "small_kdd.txt"
    synth.write_surrogate(path, n_rows=3000, seed=7)
    return kdd_data.load_dataset(path)


def make_record_line(label="normal", **overrides) -> str:
    """One schema-valid record line with optional per-column overrides."""
    values = {name: "0" for name in COLUMNS}
    values.update({
        "protocol_type": "tcp", "service": "http", "flag": "SF",
        "src_bytes": "181", "dst_bytes": "5450", "count": "8", "srv_count": "8",
        "same_srv_rate": "1.00", "dst_host_count": "9", "dst_host_srv_count": "9",
        "dst_host_same_srv_rate": "1.00",
    })
    for key, value in overrides.items():
        assert key in values, key
        values[key] = str(value)
    return ",".join(values[name] for name in COLUMNS) + f",{label}."


def make_dataset(lines) -> kdd_data.Dataset:
    records = [kdd_data.parse_record(line) for line in lines]
    return kdd_data._from_records(records)


def blob_grids(n_per_class: int, classes: int, side: int, seed: int, spread=0.5):
    """Linearly separable class blobs embedded on (1, side, side) grids."""
    rng = stream(seed, "blobs")
    X, y = [], []
    for c in range(classes):
        center = np.zeros(side * side)
        center[c::classes] = 2.0 + c
        pts = center + spread * rng.normal(size=(n_per_class, side * side))
        X.append(np.abs(pts))
        y.extend([c] * n_per_class)
    X = np.vstack(X).reshape(-1, 1, side, side)
    y = np.asarray(y, dtype=np.int64)
    order = rng.permutation(y.size)
    return X[order], y[order]
