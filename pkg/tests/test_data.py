from __future__ import annotations

import gzip
import struct

import numpy as np
import pytest

from berlinucb.data import (
    Dataset,
    idx_bytes,
    load_idx,
    load_labelled_csv,
    pool_downsample,
    stretch_concat,
    synthetic_feature_table,
    write_idx,
    write_labelled_csv,
)
from berlinucb.errors import ConfigError, ConsistencyError, DataError, FormatError, InvalidArgumentError

from conftest import MNIST_IMAGES, MNIST_LABELS


def write_pair(tmp_path, pixels, labels, compress=False):
    img, lab = tmp_path / "img.idx", tmp_path / "lab.idx"
    for path, arr in ((img, pixels), (lab, labels)):
        raw = idx_bytes(np.asarray(arr, dtype=np.uint8))
        path.write_bytes(gzip.compress(raw) if compress else raw)
    return img, lab


# -- IDX ------------------------------------------------------------------

def test_bundled_mnist_subset():
    ds = load_idx(MNIST_IMAGES, MNIST_LABELS, limit=5000)
    assert (len(ds), ds.dimension, ds.class_count) == (5000, 784, 10)
    assert ds.features.min() == 0.0 and ds.features.max() == 1.0


def test_idx_header_layout():
    raw = idx_bytes(np.zeros((2, 3, 4), dtype=np.uint8))
    assert struct.unpack(">IIII", raw[:16]) == (0x00000803, 2, 3, 4)
    assert struct.unpack(">II", idx_bytes(np.zeros(5, dtype=np.uint8))[:8]) == (0x00000801, 5)


@pytest.mark.parametrize("compress", [False, True])
def test_pixel_scaling_and_flattening(tmp_path, compress):
    pixels = np.array([[[0, 255], [128, 1]]], dtype=np.uint8)
    img, lab = write_pair(tmp_path, pixels, [3], compress)
    ds = load_idx(img, lab)
    np.testing.assert_array_equal(ds.features, [[0.0, 1.0, 128 / 255, 1 / 255]])
    assert ds.labels.tolist() == [3] and ds.class_count == 4


def test_limit_keeps_file_order(tmp_path):
    pixels = np.arange(6, dtype=np.uint8).reshape(6, 1, 1)
    img, lab = write_pair(tmp_path, pixels, [5, 4, 3, 2, 1, 0])
    ds = load_idx(img, lab, limit=3)
    assert ds.labels.tolist() == [5, 4, 3]
    np.testing.assert_array_equal(ds.features.ravel() * 255, [0, 1, 2])


def test_labels_file_with_image_magic(tmp_path):
    img, _ = write_pair(tmp_path, np.zeros((2, 2, 2)), [0, 1])
    with pytest.raises(FormatError, match="expected 0x00000801") as info:
        load_idx(img, img)
    assert info.value.offset == 0


def test_truncated_payload(tmp_path):
    img, lab = write_pair(tmp_path, np.zeros((3, 2, 2)), [0, 1, 2])
    img.write_bytes(img.read_bytes()[:-2])
    with pytest.raises(FormatError, match="truncated"):
        load_idx(img, lab)
    img.write_bytes(b"\x00\x00\x08\x03\x00\x00")
    with pytest.raises(FormatError, match="header"):
        load_idx(img, lab)


def test_count_mismatch(tmp_path):
    img, lab = write_pair(tmp_path, np.zeros((3, 2, 2)), [0, 1])
    with pytest.raises(ConsistencyError):
        load_idx(img, lab)


@pytest.mark.parametrize("compress", [False, True])
def test_idx_round_trip(tmp_path, compress):
    src = load_idx(MNIST_IMAGES, MNIST_LABELS, limit=200)
    write_idx(src, tmp_path / "i", tmp_path / "l", compress=compress)
    back = load_idx(tmp_path / "i", tmp_path / "l")
    np.testing.assert_array_equal(back.features, src.features)
    np.testing.assert_array_equal(back.labels, src.labels)


# -- CSV ------------------------------------------------------------------

def test_csv_scaling_and_label_order(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("a,kind,b,c\n1,x,10,5\n3,y,20,5\n2,x,30,5\n")
    ds = load_labelled_csv(path, "kind")
    np.testing.assert_allclose(ds.features, [[0, 0, 0], [1, 0.5, 0], [0.5, 1, 0]])
    assert ds.labels.tolist() == [0, 1, 0]
    assert ds.class_count == 2 and ds.class_names == ("x", "y")


def test_csv_warfarin_shape(tmp_path):
    rng = np.random.default_rng(0)
    path = tmp_path / "w.csv"
    write_labelled_csv(path, rng.random((5000, 93)), rng.integers(3, size=5000), label_column="dose")
    ds = load_labelled_csv(path, "dose")
    assert (len(ds), ds.dimension, ds.class_count) == (5000, 93, 3)


def test_csv_single_row_is_all_zero(tmp_path):
    path = tmp_path / "one.csv"
    path.write_text("f1,f2,label\n4.5,-2,cat\n")
    ds = load_labelled_csv(path, "label")
    np.testing.assert_array_equal(ds.features, [[0.0, 0.0]])


def test_csv_errors(tmp_path):
    header_only = tmp_path / "h.csv"
    header_only.write_text("f1,label\n")
    with pytest.raises(DataError):
        load_labelled_csv(header_only, "label")
    with pytest.raises(ConfigError):
        load_labelled_csv(header_only, "missing")
    bad = tmp_path / "bad.csv"
    bad.write_text("f1,label\n1,a\noops,b\n")
    with pytest.raises(DataError, match="row 3"):
        load_labelled_csv(bad, "label")
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(DataError):
        load_labelled_csv(empty, "label")


def test_csv_limit(tmp_path):
    path = tmp_path / "t.csv"
    write_labelled_csv(path, np.arange(20.0).reshape(10, 2), list("ababababab"))
    assert len(load_labelled_csv(path, "label", limit=4)) == 4


# -- transforms -------------------------------------------------------------

def test_pool_downsample():
    rng = np.random.default_rng(0)
    ds = Dataset(rng.random((3, 784)), [0, 1, 2], 3)
    pooled = pool_downsample(ds, 2)
    assert pooled.dimension == 196
    img = ds.features[1].reshape(28, 28)
    assert pooled.features[1, 0] == pytest.approx(img[:2, :2].mean())
    np.testing.assert_array_equal(pooled.labels, ds.labels)
    assert pool_downsample(ds, 1).features.tobytes() == ds.features.tobytes()
    const = Dataset(np.full((1, 16), 0.25), [0], 1)
    np.testing.assert_array_equal(pool_downsample(const, 4).features, [[0.25]])


def test_pool_downsample_errors():
    with pytest.raises(InvalidArgumentError):
        pool_downsample(Dataset(np.zeros((1, 10)), [0], 1), 2)
    with pytest.raises(InvalidArgumentError):
        pool_downsample(Dataset(np.zeros((1, 9)), [0], 1), 2)


def test_stretch_concat():
    rng = np.random.default_rng(1)
    a = Dataset(rng.random((4, 784)), [0, 9, 3, 1], 10)
    b = Dataset(rng.random((5, 93)), [0, 1, 2, 2, 1], 3)
    sa, sb = stretch_concat(a, b)
    assert sa.dimension == sb.dimension == 877
    assert sa.class_count == sb.class_count == 13
    assert np.all(sa.features[:, 784:] == 0) and np.all(sb.features[:, :784] == 0)
    assert sa.features[:, :784].tobytes() == a.features.tobytes()
    assert sb.features[:, 784:].tobytes() == b.features.tobytes()
    assert sb.labels.tolist() == [10, 11, 12, 12, 11]


def test_dataset_validate_and_immutability():
    ds = Dataset(np.zeros((2, 2)), [0, 1], 2)
    with pytest.raises(ValueError):
        ds.features[0, 0] = 1.0
    with pytest.raises(DataError):
        Dataset(np.zeros((2, 2)), [0, 5], 2).validate()
    with pytest.raises(DataError):
        Dataset(np.full((1, 2), 2.0), [0], 1).validate()
    Dataset(np.full((1, 2), 2.0), [0], 1).validate(unit_range=False)


def test_synthetic_feature_table_is_separable():
    X, y = synthetic_feature_table(4, 50, 6, separation=8.0, noise=0.5, seed=0)
    assert X.shape == (200, 6) and np.bincount(y).tolist() == [50] * 4
    means = np.stack([X[y == c].mean(axis=0) for c in range(4)])
    assert np.all(np.argmin(((X[:, None] - means) ** 2).sum(-1), axis=1) == y)
