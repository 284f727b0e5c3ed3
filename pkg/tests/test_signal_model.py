import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from popcnn.pipeline import preprocess
from popcnn.signal_model import (
    Dataset,
    NormStats,
    OdorSample,
    apply_normalization,
    as_sensor_matrix,
    center_label,
    fit_normalization,
    load_sample_csv,
    read_manifest,
    save_sample_csv,
    truncate,
    uniform_subsample,
    write_dataset,
)

finite = st.floats(-1e4, 1e4, allow_nan=False)


def sample(matrix, label=0.0, split="train", odor="a", rep=0):
    return OdorSample(odor, rep, np.asarray(matrix, dtype=float), label, split)


def test_sensor_matrix_validation():
    m = as_sensor_matrix([[1, 2], [3, 4]])
    assert m.dtype == np.float64 and not m.flags.writeable
    for bad in ([1, 2, 3], [[1]], [[1, np.nan]], np.zeros((0, 3))):
        with pytest.raises(ValueError):
            as_sensor_matrix(bad)


def test_odor_sample_validation():
    with pytest.raises(ValueError):
        sample([[0, 1]], label=np.inf)
    with pytest.raises(ValueError):
        sample([[0, 1]], split="validation")
    with pytest.raises(ValueError):
        sample([[0, 1]], rep=-1)


# -- truncate -----------------------------------------------------------------

def test_truncate_examples(rng):
    m = rng.standard_normal((16, 500))
    np.testing.assert_array_equal(truncate(m, 500), m)
    assert truncate([[1, 2, 3, 4], [5, 6, 7, 8]], 2).tolist() == [[1, 2], [5, 6]]
    big = rng.standard_normal((16, 873))
    out = truncate(big, 500)
    want = np.empty((16, 500))
    for j in range(500):
        want[:, j] = big[:, j]
    np.testing.assert_array_equal(out, want)


def test_truncate_errors():
    with pytest.raises(IndexError):
        truncate(np.zeros((2, 4)), 5)
    with pytest.raises(ValueError):
        truncate(np.zeros((2, 4)), 0)


@given(arrays(np.float64, (3, 12), elements=finite), st.integers(2, 12))
def test_truncate_idempotent(m, k):
    once = truncate(m, k)
    np.testing.assert_array_equal(truncate(once, k), once)


# -- uniform subsampling ------------------------------------------------------

def test_uniform_examples(rng):
    m = rng.standard_normal((16, 250))
    np.testing.assert_array_equal(uniform_subsample(m, 250), m)
    assert uniform_subsample([[0, 1, 2, 3, 4]], 3).tolist() == [[0, 2, 4]]
    six = np.arange(12.0).reshape(2, 6)
    np.testing.assert_array_equal(uniform_subsample(six, 2), six[:, [0, 5]])
    with pytest.raises(IndexError):
        uniform_subsample(six, 7)


@given(st.integers(2, 400), st.data())
def test_uniform_matches_rounding_oracle(n, data):
    w = data.draw(st.integers(2, n))
    row = np.arange(n, dtype=float)[None]
    got = uniform_subsample(row, w)[0]
    # exact rationals, halves rounded up
    from fractions import Fraction
    want = [int(Fraction(i * (n - 1), w - 1) + Fraction(1, 2)) for i in range(w)]
    assert got.tolist() == want
    assert got[0] == 0 and got[-1] == n - 1
    assert np.all(np.diff(got) > 0)


# -- normalization ------------------------------------------------------------

def test_fit_normalization_examples():
    s = fit_normalization(Dataset((sample([[0, 5, 10]]),)))
    assert s.per_sensor_min.tolist() == [0] and s.per_sensor_max.tolist() == [10]
    s = fit_normalization(Dataset((sample([[0, 2]]), sample([[4, 8]]))))
    assert s.per_sensor_min.tolist() == [0] and s.per_sensor_max.tolist() == [8]


def test_fit_normalization_uses_training_split_only():
    ds = Dataset((sample([[0, 1]]), sample([[-50, 50]], split="novel")))
    s = fit_normalization(ds)
    assert (s.per_sensor_min[0], s.per_sensor_max[0]) == (0, 1)
    with pytest.raises(ValueError):
        fit_normalization(Dataset(()))


def test_fit_normalization_matches_scan(small_raw):
    stats = fit_normalization(small_raw)
    m = small_raw.shape[0]
    lo, hi = [np.inf] * m, [-np.inf] * m
    for s in small_raw:
        for i, row in enumerate(s.matrix.tolist()):
            for v in row:
                lo[i] = min(lo[i], v)
                hi[i] = max(hi[i], v)
    assert stats.per_sensor_min.tolist() == lo
    assert stats.per_sensor_max.tolist() == hi


def test_apply_normalization_examples():
    stats = NormStats(np.array([0.0, 7.0, 0.0]), np.array([10.0, 7.0, 10.0]))
    out = apply_normalization([[0, 5, 10], [7, 7, 7], [12, -3, 4]], stats)
    assert out.tolist() == [[0, 0.5, 1], [0.5, 0.5, 0.5], [1.0, 0.0, 0.4]]
    with pytest.raises(ValueError):
        apply_normalization(np.zeros((2, 3)), stats)


def test_norm_stats_validation():
    with pytest.raises(ValueError):
        NormStats(np.array([2.0]), np.array([1.0]))


@settings(max_examples=50)
@given(arrays(np.float64, (4, 6), elements=finite), arrays(np.float64, (4, 6), elements=finite))
def test_normalization_range_and_extremes(train, test):
    ds = Dataset((sample(train),))
    stats = fit_normalization(ds)
    for m in (train, test):
        out = apply_normalization(m, stats)
        assert np.all((out >= 0) & (out <= 1))
    out = apply_normalization(train, stats)
    for i in range(4):
        if stats.per_sensor_max[i] > stats.per_sensor_min[i]:
            assert out[i].min() == 0.0 and out[i].max() == 1.0


# -- labels -------------------------------------------------------------------

def test_center_label_examples():
    assert center_label(15, 15) == 0
    assert center_label(25, 15) == 10
    assert center_label(5, 15) == -10
    with pytest.raises(ValueError):
        center_label(float("nan"), 15)


@given(st.floats(-100, 100), st.floats(-100, 100))
def test_center_label_inverse(raw, mid):
    assert center_label(raw, mid) + mid == pytest.approx(raw, abs=1e-12)


# -- files --------------------------------------------------------------------

def test_sample_csv_round_trip(tmp_path, rng):
    m = rng.standard_normal((3, 7)) * 1e4
    save_sample_csv(tmp_path / "s.csv", m)
    np.testing.assert_array_equal(load_sample_csv(tmp_path / "s.csv"), m)


def test_dataset_round_trip(tmp_path, small_processed):
    write_dataset(small_processed, tmp_path)
    back = read_manifest(tmp_path / "manifest.csv")
    assert len(back) == len(small_processed)
    for a, b in zip(small_processed, back):
        assert (a.odor_id, a.repeat_index, a.split, a.label) == (b.odor_id, b.repeat_index,
                                                                 b.split, b.label)
        np.testing.assert_array_equal(a.matrix, b.matrix)
    stats = NormStats.load(tmp_path / "norm_stats.csv")
    np.testing.assert_array_equal(stats.per_sensor_min, small_processed.norm_stats.per_sensor_min)


def test_manifest_relative_paths_and_errors(tmp_path):
    (tmp_path / "d").mkdir()
    save_sample_csv(tmp_path / "d" / "x.csv", np.array([[1.0, 2.0]]))
    man = tmp_path / "d" / "m.csv"
    man.write_text("odor1,0,x.csv,20,train\n\n")
    ds = read_manifest(man)
    assert ds.samples[0].label == 5.0
    man.write_text("odor1,0,x.csv,20\n")
    with pytest.raises(ValueError):
        read_manifest(man)
    man.write_text("odor1,0,x.csv,abc,train\n")
    with pytest.raises(ValueError):
        read_manifest(man)
    man.write_text("odor1,0,missing.csv,20,train\n")
    with pytest.raises(OSError):
        read_manifest(man)


# -- dataset helpers and pipeline --------------------------------------------

def test_dataset_groups_and_arrays():
    ds = Dataset((sample([[0, 1]], 1.0, odor="b"), sample([[2, 3]], 2.0, odor="a"),
                  sample([[4, 5]], 1.0, odor="b", rep=1)))
    assert ds.odor_ids() == ["b", "a"]
    x, y = ds.arrays()
    assert x.shape == (3, 1, 1, 2) and y.tolist() == [1.0, 2.0, 1.0]
    ragged = Dataset((sample([[0, 1]]), sample([[0, 1, 2]])))
    with pytest.raises(ValueError):
        ragged.arrays()


def test_preprocess_shapes_and_split_isolation(small_raw):
    ds, sched = preprocess(small_raw)
    assert ds.shape == (16, 250) and len(sched) == 250
    for s in ds:
        assert s.matrix.min() >= 0 and s.matrix.max() <= 1
    # held-out samples never influence the fitted statistics
    moved = Dataset(tuple(
        OdorSample(s.odor_id, s.repeat_index, s.matrix * (1 if s.split == "train" else 9),
                   s.label, "novel" if i % 4 == 0 else s.split)
        for i, s in enumerate(small_raw)))
    a, _ = preprocess(moved)
    train_only = Dataset(tuple(s for s in moved if s.split == "train"))
    b, _ = preprocess(train_only)
    np.testing.assert_array_equal(a.norm_stats.per_sensor_max, b.norm_stats.per_sensor_max)


def test_preprocess_order_matches_manual(small_raw):
    from popcnn.signal_model import uniform_indices
    ds, _ = preprocess(small_raw, keep_seconds=500, width=250)
    cut = [s.matrix[:, :500][:, uniform_indices(500, 250)] for s in small_raw]
    lo = np.min([c.min(axis=1) for c in cut], axis=0)
    hi = np.max([c.max(axis=1) for c in cut], axis=0)
    want = (cut[3] - lo[:, None]) / (hi - lo)[:, None]
    np.testing.assert_allclose(ds.samples[3].matrix, want, rtol=0, atol=1e-15)
