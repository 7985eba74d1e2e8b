import gzip
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from legr.archgraph import graph_from_text
from legr.data import (BadMagicError, CountMismatchError, Dataset, SplitSpec, TruncatedError, channel_stats, read_idx,
                       split, standardize, synth_shapes, write_idx)
from legr.nn import Model, TrainConfig, evaluate, train_steps


def test_synth_deterministic():
    a = synth_shapes(40, 4, 16, seed=3)
    b = synth_shapes(40, 4, 16, seed=3)
    assert np.array_equal(a.images, b.images) and np.array_equal(a.labels, b.labels)
    c = synth_shapes(40, 4, 16, seed=4)
    assert not np.array_equal(a.images, c.images)


def test_synth_balance_and_range():
    d = synth_shapes(10, 3, 16, seed=0)
    assert sorted(np.bincount(d.labels).tolist()) == [3, 3, 4]
    assert d.images.shape == (10, 1, 16, 16)
    assert d.images.min() >= 0.0 and d.images.max() <= 1.0


@pytest.mark.parametrize("kwargs", [dict(classes=1), dict(classes=11), dict(size=8)])
def test_synth_rejects_bad_args(kwargs):
    args = dict(n=10, classes=3, size=16, seed=0) | kwargs
    with pytest.raises(ValueError):
        synth_shapes(**args)


def test_noiseless_shapes_are_learnable():
    data = synth_shapes(400, 4, 16, seed=1, noise=0.0)
    (data,) = standardize(data)
    graph = graph_from_text("""format: legr-arch/1
input: 1x16x16
layer conv1 kind=conv k=3 stride=1 pad=1 out_channels=12
layer relu1 kind=relu
layer conv2 kind=conv k=3 stride=2 pad=1 out_channels=12
layer relu2 kind=relu
layer conv3 kind=conv k=3 stride=2 pad=1 out_channels=12
layer relu3 kind=relu
layer gap kind=gap
layer fc kind=dense out_channels=4 bias=1
layer loss kind=softmax_ce
""")
    model = Model.initialize(graph, np.random.default_rng(0))
    train_steps(model, data, TrainConfig(learning_rate=0.05, batch_size=16, seed=0), 500)
    assert evaluate(model, data) >= 0.99


# ---------------------------------------------------------------------- IDX


def _fixture(tmp_path):
    pixels = np.arange(32, dtype=np.uint8).reshape(2, 4, 4) * 8
    img = tmp_path / "img.idx"
    lab = tmp_path / "lab.idx"
    img.write_bytes(bytes([0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 4, 0, 0, 0, 4]) + pixels.tobytes())
    lab.write_bytes(bytes([0, 0, 8, 1, 0, 0, 0, 2, 1, 0]))
    return img, lab, pixels


def test_idx_hand_built(tmp_path):
    img, lab, pixels = _fixture(tmp_path)
    d = read_idx(img, lab)
    assert d.images.shape == (2, 1, 4, 4)
    assert d.images[1, 0, 3, 3] == 248 / 255
    np.testing.assert_array_equal(d.images[:, 0] * 255, pixels)
    assert d.labels.tolist() == [1, 0] and d.class_count == 2


def test_idx_gzip(tmp_path):
    img, lab, _ = _fixture(tmp_path)
    for p in (img, lab):
        (tmp_path / (p.name + ".gz")).write_bytes(gzip.compress(p.read_bytes()))
    a = read_idx(img, lab)
    b = read_idx(tmp_path / "img.idx.gz", tmp_path / "lab.idx.gz")
    assert np.array_equal(a.images, b.images) and np.array_equal(a.labels, b.labels)


def test_idx_write_roundtrip(tmp_path):
    img, lab, pixels = _fixture(tmp_path)
    write_idx(tmp_path / "i2", tmp_path / "l2", pixels, [1, 0])
    assert (tmp_path / "i2").read_bytes() == img.read_bytes()
    assert (tmp_path / "l2").read_bytes() == lab.read_bytes()


def test_idx_bad_magic(tmp_path):
    img, lab, _ = _fixture(tmp_path)
    with pytest.raises(BadMagicError):
        read_idx(lab, lab)


def test_idx_truncated(tmp_path):
    img, lab, _ = _fixture(tmp_path)
    img.write_bytes(img.read_bytes()[:-1])
    with pytest.raises(TruncatedError):
        read_idx(img, lab)
    img.write_bytes(b"\x00\x00")
    with pytest.raises(TruncatedError):
        read_idx(img, lab)


def test_idx_count_mismatch(tmp_path):
    img, lab, _ = _fixture(tmp_path)
    lab.write_bytes(struct.pack(">II", 0x801, 3) + bytes([1, 0, 1]))
    with pytest.raises(CountMismatchError):
        read_idx(img, lab)


# ---------------------------------------------------------------- splitting


def test_split_sizes_and_disjointness():
    d = synth_shapes(100, 4, 16, seed=0)
    train, val = split(d, SplitSpec(0.1, True, 0))
    assert (len(train), len(val)) == (90, 10)
    tr = {x.tobytes() for x in train.images}
    va = {x.tobytes() for x in val.images}
    assert not tr & va and len(tr | va) == 100


def test_split_rejects_empty_validation():
    d = synth_shapes(20, 2, 16, seed=0)
    with pytest.raises(ValueError):
        split(d, SplitSpec(0.0))
    with pytest.raises(ValueError):
        split(d, SplitSpec(0.01))
    with pytest.raises(ValueError):
        SplitSpec(1.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 6), st.integers(20, 120), st.floats(0.05, 0.5), st.integers(0, 1000))
def test_stratified_split(classes, n, frac, seed):
    labels = np.arange(n) % classes
    d = Dataset(np.arange(n, dtype=np.float64).reshape(n, 1, 1, 1), labels, classes)
    n_val = int(np.floor(frac * n + 0.5))
    if n_val == 0:
        return
    train, val = split(d, SplitSpec(frac, True, seed))
    assert len(val) == n_val
    ids = np.concatenate([train.images.ravel(), val.images.ravel()])
    assert sorted(ids.tolist()) == list(range(n))
    counts = np.bincount(val.labels, minlength=classes)
    quota = frac * np.bincount(labels, minlength=classes)
    assert np.all(np.abs(counts - quota) < 1.0)
    if n_val >= classes:
        assert np.all(counts >= 1) or np.any(quota < 1.0)


def test_split_deterministic():
    d = synth_shapes(60, 3, 16, seed=0)
    a = split(d, SplitSpec(0.2, True, 5))[1]
    b = split(d, SplitSpec(0.2, True, 5))[1]
    assert np.array_equal(a.images, b.images)


def test_standardize_uses_train_stats_and_is_idempotent():
    d = synth_shapes(60, 3, 16, seed=0)
    train, val = split(d, SplitSpec(0.2, True, 0))
    s_train, s_val = standardize(train, val)
    mean, std = channel_stats(s_train)
    np.testing.assert_allclose(mean, 0.0, atol=1e-12)
    np.testing.assert_allclose(std, 1.0, atol=1e-12)
    m0, s0 = channel_stats(train)
    np.testing.assert_allclose(s_val.images, (val.images - m0[0]) / s0[0])
    (again,) = standardize(s_train)
    np.testing.assert_allclose(again.images, s_train.images, atol=1e-12)
