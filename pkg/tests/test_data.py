"""Dataset plumbing: IDX/CIFAR round trips, corruption reporting, grayscale,
splits, and batching order."""

import numpy as np
import pytest
from conftest import synth_dataset

from analognn.data import (Dataset, DatasetView, SplitPlan, batches,
                           dataset_paths, grayscale, load_cifar10, load_dataset,
                           load_idx, split, write_idx)
from analognn.errors import DataFormatError
from analognn.rng import RngStream
from analognn.tensor import Tensor


def small_idx_dataset(n=40, seed=0):
    return synth_dataset(n, seed)


# IDX ---------------------------------------------------------------------------

def test_idx_round_trip_bit_identical(tmp_path):
    ds = small_idx_dataset()
    write_idx(ds, tmp_path / "img", tmp_path / "lab")
    back = load_idx(tmp_path / "img", tmp_path / "lab")
    np.testing.assert_array_equal(back._bytes, ds._bytes)
    np.testing.assert_array_equal(back.labels, ds.labels)


def test_idx_gzip_round_trip(tmp_path):
    ds = small_idx_dataset()
    write_idx(ds, tmp_path / "img.gz", tmp_path / "lab.gz")
    assert (tmp_path / "img.gz").read_bytes()[:2] == b"\x1f\x8b"
    back = load_idx(tmp_path / "img.gz", tmp_path / "lab.gz")
    np.testing.assert_array_equal(back._bytes, ds._bytes)
    np.testing.assert_array_equal(back.labels, ds.labels)


def test_idx_bad_magic(tmp_path):
    ds = small_idx_dataset(8)
    write_idx(ds, tmp_path / "img", tmp_path / "lab")
    raw = bytearray((tmp_path / "img").read_bytes())
    raw[3] = 0x42
    (tmp_path / "img").write_bytes(bytes(raw))
    with pytest.raises(DataFormatError, match="bad magic .* offset 0"):
        load_idx(tmp_path / "img", tmp_path / "lab")


def test_idx_truncated_images(tmp_path):
    ds = small_idx_dataset(8)
    write_idx(ds, tmp_path / "img", tmp_path / "lab")
    raw = (tmp_path / "img").read_bytes()
    (tmp_path / "img").write_bytes(raw[:-100])
    with pytest.raises(DataFormatError, match="offset"):
        load_idx(tmp_path / "img", tmp_path / "lab")


def test_idx_label_count_mismatch(tmp_path):
    ds = small_idx_dataset(8)
    write_idx(ds, tmp_path / "img", tmp_path / "lab")
    short = Dataset("x", ds.labels[:4], raw_bytes=ds._bytes[:4])
    write_idx(short, tmp_path / "img4", tmp_path / "lab4")
    with pytest.raises(DataFormatError, match="labels for"):
        load_idx(tmp_path / "img", tmp_path / "lab4")


def test_images_are_exact_byte_fractions():
    ds = small_idx_dataset(4)
    np.testing.assert_array_equal(ds.images, ds._bytes.astype(np.float64) / 255.0)
    assert ds.images.dtype == np.float64
    assert ds.images.min() >= 0.0 and ds.images.max() <= 1.0


# CIFAR ---------------------------------------------------------------------------

def cifar_bytes(n=10, seed=1):
    r = RngStream(seed)
    labels = r.integers(0, 10, size=n).astype(np.uint8)
    pixels = r.integers(0, 256, size=(n, 3072)).astype(np.uint8)
    return np.hstack([labels[:, None], pixels]).tobytes(), labels, pixels


def test_cifar_round_trip(tmp_path):
    buf, labels, pixels = cifar_bytes()
    (tmp_path / "data_batch_1.bin").write_bytes(buf)
    ds = load_cifar10([tmp_path / "data_batch_1.bin"])
    assert ds.n == 10 and ds.image_shape == (3, 32, 32)
    np.testing.assert_array_equal(ds.labels, labels.astype(np.int64))
    np.testing.assert_array_equal(ds._bytes.reshape(10, -1), pixels)


def test_cifar_concatenates_batches(tmp_path):
    b1, l1, _ = cifar_bytes(4, seed=2)
    b2, l2, _ = cifar_bytes(6, seed=3)
    (tmp_path / "a.bin").write_bytes(b1)
    (tmp_path / "b.bin").write_bytes(b2)
    ds = load_cifar10([tmp_path / "a.bin", tmp_path / "b.bin"])
    assert ds.n == 10
    np.testing.assert_array_equal(ds.labels, np.concatenate([l1, l2]))


def test_cifar_bad_record_size(tmp_path):
    buf, _, _ = cifar_bytes(3)
    (tmp_path / "x.bin").write_bytes(buf[:-10])
    with pytest.raises(DataFormatError, match="not a multiple"):
        load_cifar10([tmp_path / "x.bin"])


def test_cifar_label_out_of_range(tmp_path):
    buf, _, _ = cifar_bytes(3)
    raw = bytearray(buf)
    raw[2 * 3073] = 11  # third record's label byte
    (tmp_path / "x.bin").write_bytes(bytes(raw))
    with pytest.raises(DataFormatError, match=r"label 11 out of range at offset 6146"):
        load_cifar10([tmp_path / "x.bin"])


def test_grayscale_luma_weights():
    buf, labels, pixels = cifar_bytes(5, seed=4)
    ds = Dataset("cifar10", labels, raw_bytes=np.frombuffer(
        buf, dtype=np.uint8).reshape(5, 3073)[:, 1:].reshape(5, 3, 32, 32))
    g = grayscale(ds)
    assert g.image_shape == (1, 32, 32) and g.name == "cifar10_gray"
    img = ds.images
    want = 0.299 * img[:, 0] + 0.587 * img[:, 1] + 0.114 * img[:, 2]
    np.testing.assert_allclose(g.images[:, 0], want, atol=1e-12)
    with pytest.raises(DataFormatError):
        grayscale(g)


# split / batches ---------------------------------------------------------------

def test_split_disjoint_and_complete():
    ds = small_idx_dataset(50)
    train, ev = split(ds, SplitPlan(0.8, seed=3))
    assert train.n == 40 and ev.n == 10
    both = np.concatenate([train.indices, ev.indices])
    np.testing.assert_array_equal(np.sort(both), np.arange(50))


def test_split_deterministic_and_seeded():
    ds = small_idx_dataset(50)
    a, _ = split(ds, SplitPlan(0.8, seed=3))
    b, _ = split(ds, SplitPlan(0.8, seed=3))
    c, _ = split(ds, SplitPlan(0.8, seed=4))
    np.testing.assert_array_equal(a.indices, b.indices)
    assert not np.array_equal(a.indices, c.indices)


def test_split_is_shuffled():
    ds = small_idx_dataset(200)
    train, _ = split(ds, SplitPlan(0.5, seed=0))
    assert not np.array_equal(train.indices, np.arange(100))


def test_split_plan_validation():
    with pytest.raises(ValueError):
        SplitPlan(1.0)
    with pytest.raises(ValueError):
        SplitPlan(0.0)


def test_batches_cover_every_index_once():
    ds = small_idx_dataset(23)
    seen = []
    for xb, yb in batches(ds, 5, shuffle_seed=7, epoch=0):
        assert isinstance(xb, Tensor)
        assert xb.shape[1:] == (1, 28, 28)
        assert xb.shape[0] == len(yb)
        seen.extend(yb.tolist())
    assert len(seen) == 23  # partial final batch included
    assert sorted(seen) == sorted(ds.labels.tolist())


def test_batches_epoch_keyed_shuffle():
    ds = small_idx_dataset(64)
    order0 = np.concatenate([y for _, y in batches(ds, 16, 7, epoch=0)])
    order0_again = np.concatenate([y for _, y in batches(ds, 16, 7, epoch=0)])
    order1 = np.concatenate([y for _, y in batches(ds, 16, 7, epoch=1)])
    np.testing.assert_array_equal(order0, order0_again)
    assert not np.array_equal(order0, order1)


def test_batches_sequential_when_unshuffled():
    ds = small_idx_dataset(12)
    ys = np.concatenate([y for _, y in batches(ds, 5, 7, 0, shuffle=False)])
    np.testing.assert_array_equal(ys, ds.labels)


def test_batches_respect_view_subset():
    ds = small_idx_dataset(30)
    view = DatasetView(ds, np.array([3, 5, 9]))
    got = np.concatenate([y for _, y in batches(view, 2, 0, 0, shuffle=False)])
    np.testing.assert_array_equal(got, ds.labels[[3, 5, 9]])


def test_batches_batch_size_validated():
    with pytest.raises(ValueError):
        list(batches(small_idx_dataset(4), 0, 0, 0))


# path resolution ------------------------------------------------------------------

def test_load_dataset_round_trip(tmp_path):
    ds = small_idx_dataset(16)
    base = tmp_path / "mnist"
    base.mkdir()
    write_idx(ds, base / "train-images-idx3-ubyte", base / "train-labels-idx1-ubyte")
    back = load_dataset("mnist", tmp_path, train=True)
    assert back.name == "mnist" and back.n == 16
    np.testing.assert_array_equal(back.labels, ds.labels)


def test_dataset_paths_prefers_plain_then_gz(tmp_path):
    base = tmp_path / "mnist"
    base.mkdir()
    ds = small_idx_dataset(4)
    write_idx(ds, base / "t10k-images-idx3-ubyte.gz", base / "t10k-labels-idx1-ubyte.gz")
    paths = dataset_paths("mnist", tmp_path, train=False)
    assert paths[0].name.endswith(".gz")


def test_missing_data_names_fetch_script(tmp_path):
    with pytest.raises(FileNotFoundError, match="fetch_data"):
        dataset_paths("mnist", tmp_path, train=True)
    with pytest.raises(ValueError, match="unknown dataset"):
        dataset_paths("imagenet", tmp_path, train=True)


def test_cifar_gray_path_uses_cifar_files(tmp_path):
    buf, labels, _ = cifar_bytes(6, seed=5)
    base = tmp_path / "cifar10"
    base.mkdir()
    for i in range(1, 6):
        (base / f"data_batch_{i}.bin").write_bytes(buf)
    ds = load_dataset("cifar10_gray", tmp_path, train=True)
    assert ds.image_shape == (1, 32, 32) and ds.n == 30
