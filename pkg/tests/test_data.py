import gzip
import struct

import numpy as np
import pytest

from asymmlfc import data as dio
from asymmlfc.problem import Dataset, InvalidConfig
from asymmlfc.scenarios import DigitConfig, build_digit_scenario


def test_csv_round_trip(tmp_path):
    X = np.random.default_rng(0).random((4, 3))
    d = Dataset(X, {"p2": [1.0, 0.0, np.nan, 1.0]})
    dio.write_dataset_csv(tmp_path / "n.csv", d, "p2")
    back = dio.read_dataset_csv(tmp_path / "n.csv", "p2")
    assert np.array_equal(back.features, X)
    np.testing.assert_array_equal(back.labels["p2"], d.labels["p2"])
    assert (tmp_path / "n.csv").read_text().splitlines()[3].endswith(",")


def test_csv_bad_header(tmp_path):
    (tmp_path / "bad.csv").write_text("a,b,label\n1,2,1\n")
    with pytest.raises(ValueError):
        dio.read_dataset_csv(tmp_path / "bad.csv", "p0")


def test_idx_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    img = rng.integers(0, 256, size=(5, 3, 4), dtype=np.uint8)
    lab = np.array([3, 1, 4, 1, 5])
    dio.write_idx_images(tmp_path / "i.idx", img)
    dio.write_idx_labels(tmp_path / "l.idx", lab)
    X = dio.read_idx_images(tmp_path / "i.idx")
    assert X.shape == (5, 12) and np.allclose(X * 255, img.reshape(5, 12))
    assert dio.read_idx_labels(tmp_path / "l.idx").tolist() == lab.tolist()
    # gzip is detected from the suffix
    (tmp_path / "l.idx.gz").write_bytes(gzip.compress((tmp_path / "l.idx").read_bytes()))
    assert dio.read_idx_labels(tmp_path / "l.idx.gz").tolist() == lab.tolist()


def test_idx_errors(tmp_path):
    (tmp_path / "x").write_bytes(struct.pack(">II", 0x801, 3) + b"\x01")
    with pytest.raises(ValueError, match="truncated"):
        dio.read_idx_labels(tmp_path / "x")
    with pytest.raises(ValueError, match="truncated header"):
        dio.read_idx_images(tmp_path / "x")
    (tmp_path / "y").write_bytes(struct.pack(">IIII", 0x801, 1, 1, 1) + b"\x01")
    with pytest.raises(ValueError, match="magic"):
        dio.read_idx_images(tmp_path / "y")


def test_generators_are_seeded_and_bounded():
    a = dio.sample_documents(50, np.random.default_rng(3))
    b = dio.sample_documents(50, np.random.default_rng(3))
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    X, Y = a
    assert X.min() >= 0 and X.max() <= 1 and set(np.unique(Y)) <= {0.0, 1.0}
    assert np.all(Y.sum(axis=1) >= 1)
    rng = np.random.default_rng(0)
    blobs = dio.sample_blobs(dio.blob_means(10, 4, rng), np.arange(10), 0.1, rng)
    assert blobs.shape == (10, 4) and blobs.min() >= 0 and blobs.max() <= 1


def test_digit_scenario_from_idx(tmp_path):
    rng = np.random.default_rng(2)
    lab = np.repeat(np.arange(10), 20)
    img = np.clip(lab[:, None, None] * 25 + rng.integers(0, 20, size=(200, 4, 4)), 0, 255)
    dio.write_idx_images(tmp_path / "img", img)
    dio.write_idx_labels(tmp_path / "lab", lab)
    cfg = DigitConfig(n_sup=4, n_unsup=3, n_test_per_class=2, source=f"idx:{tmp_path / 'img'},{tmp_path / 'lab'}")
    sc = build_digit_scenario(cfg)
    assert len(sc.problems) == 10 and sc.problems[0].features.shape == (7, 16)
    with pytest.raises(InvalidConfig):
        build_digit_scenario(DigitConfig(n_sup=40, source=cfg.source))
