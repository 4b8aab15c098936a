import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from surrokit.datagen import (DEFAULT_TRAIN_FRACTION, Dataset, DatasetGenerationError,
                              DatasetParseError, NormSpec, gen_lj_dataset, gen_newton_dataset,
                              read_dataset, split, write_dataset)
from surrokit.kernels import LJParams


def fpair_by_hand(r_sq, eps=1.0, sigma=1.0):
    r_cut_sq = 2 ** (1 / 3) * sigma ** 2
    if r_sq >= r_cut_sq:
        return 0.0
    inv6 = (sigma ** 2 / r_sq) ** 3
    return 24 * eps * (2 * inv6 ** 2 - inv6) / r_sq


def test_newton_single_sample():
    ds = gen_newton_dataset(1, coeff_ranges=((1, 1), (0, 0), (-4, -4)), x0=3.0)
    np.testing.assert_array_equal(ds.inputs, [[1, 0, -4]])
    assert abs(ds.outputs[0, 0] - 2.0) < 1e-10
    assert ds.meta["x0"] == "3.0"


def test_newton_labels_are_roots():
    ds = gen_newton_dataset(2000, rng_seed=3)
    a, b, c = ds.inputs.T
    x = ds.outputs[:, 0]
    assert np.all(np.abs(a * x * x + b * x + c) < 1e-6)
    assert np.all(b * b - 4 * a * c >= 0.1)
    x0 = float(ds.meta["x0"])
    assert 1 <= x0 <= 100


def test_newton_deterministic(tmp_path):
    for i in range(2):
        write_dataset(gen_newton_dataset(300, rng_seed=11), tmp_path / f"d{i}.csv")
    assert (tmp_path / "d0.csv").read_bytes() == (tmp_path / "d1.csv").read_bytes()
    assert (tmp_path / "d0.csv.norm").read_bytes() == (tmp_path / "d1.csv.norm").read_bytes()


def test_newton_rejection_abort():
    # b^2 - 4ac <= -39 everywhere: never a real root
    with pytest.raises(DatasetGenerationError, match="rejection rate"):
        gen_newton_dataset(10, coeff_ranges=((1, 2), (-1, 1), (10, 20)))


def test_lj_labels():
    p = LJParams()
    ds = gen_lj_dataset(5000, p, rng_seed=2)
    for r_sq, label in zip(ds.inputs[:, 0], ds.outputs[:, 0]):
        assert label == pytest.approx(fpair_by_hand(r_sq), rel=1e-13, abs=0)
    beyond = ds.inputs[:, 0] >= p.r_cut_sq
    assert beyond.any() and np.all(ds.outputs[beyond, 0] == 0.0)


def test_lj_sample_at_sigma():
    ds = gen_lj_dataset(1, r_sq_range=(1.0, 1.0 + 1e-15))
    assert ds.outputs[0, 0] == pytest.approx(24.0, rel=1e-12)


def test_lj_beyond_cutoff_fraction():
    # uniform in d^2 on (0, (1.2 r_c)^2]: measure of [r_c^2, 1.44 r_c^2] is 0.44/1.44
    p = LJParams()
    n = 200_000
    ds = gen_lj_dataset(n, p, r_sq_range=(1e-3, (1.2 * p.r_cut) ** 2), rng_seed=4)
    frac = np.mean(ds.outputs[:, 0] == 0.0)
    expected = ((1.2 * p.r_cut) ** 2 - p.r_cut_sq) / ((1.2 * p.r_cut) ** 2 - 1e-3)
    assert abs(frac - expected) < 4 * np.sqrt(expected * (1 - expected) / n)


def test_lj_bad_ranges():
    with pytest.raises(ValueError):
        gen_lj_dataset(10, r_sq_range=(1.0, 0.5))
    with pytest.raises(ValueError):
        gen_lj_dataset(10, r_sq_range=(0.5, 5.0))


def test_split_default_fraction_counts():
    ds = Dataset(np.arange(105_472.0)[:, None], np.zeros((105_472, 1)))
    train, val = split(ds, DEFAULT_TRAIN_FRACTION, 0)
    assert (len(train), len(val)) == (102_400, 3_072)


def test_split_small_and_deterministic():
    ds = Dataset(np.arange(10.0)[:, None], np.arange(10.0)[:, None] * 2)
    train, val = split(ds, 0.7, 5)
    assert (len(train), len(val)) == (7, 3)
    assert set(train.inputs[:, 0]).isdisjoint(val.inputs[:, 0])
    again, _ = split(ds, 0.7, 5)
    assert np.array_equal(again.inputs, train.inputs)
    assert train.input_norm == val.input_norm
    assert train.input_norm.lo[0] == train.inputs.min()


def test_split_rejects_empty_side():
    ds = Dataset(np.arange(3.0)[:, None], np.zeros((3, 1)))
    with pytest.raises(ValueError):
        split(ds, 0.01, 0)
    with pytest.raises(ValueError):
        split(ds, 1.0, 0)


def test_training_split_normalizes_into_unit_interval():
    train, _ = split(gen_newton_dataset(500, rng_seed=1), 0.8, 1)
    x, y = train.normalized()
    for arr in (x, y):
        assert arr.min() >= 0 and arr.max() <= 1
        np.testing.assert_array_equal(arr.min(axis=0), 0)
        np.testing.assert_array_equal(arr.max(axis=0), 1)


@settings(max_examples=100, deadline=None)
@given(hnp.arrays(np.float64, (7, 3), elements=st.floats(-1e6, 1e6)))
def test_norm_invertible(values):
    spec = NormSpec.fit(values)
    assert np.all(spec.hi > spec.lo)
    np.testing.assert_allclose(spec.denormalize(spec.normalize(values)), values, rtol=0,
                               atol=1e-12 * max(1.0, np.abs(values).max()))


def test_round_trip(tmp_path):
    train, _ = split(gen_newton_dataset(400, rng_seed=7), 0.9, 7)
    path = tmp_path / "d.csv"
    write_dataset(train, path)
    back = read_dataset(path)
    assert back == train
    assert path.read_text().splitlines()[0] == "in_0,in_1,in_2,out_0"


@pytest.mark.parametrize("text, row, msg", [
    ("", 0, "no samples"),
    ("in_0,out_0\n", 0, "no samples"),
    ("in_0,in_1,out_0\n1,2\n", 1, "expected 3 cells"),
    ("in_0,out_0\n1,2\n3,x\n", 2, "non-numeric"),
    ("in_0,foo\n1,2\n", 0, "bad header"),
])
def test_parse_errors(tmp_path, text, row, msg):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(DatasetParseError, match=msg) as err:
        read_dataset(path)
    assert err.value.row == row
