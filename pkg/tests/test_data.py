import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from promptcast.data import (
    DATASETS,
    SeriesCollection,
    SplitAxis,
    SplitSpec,
    Standardization,
    apply_subsample,
    build_windows,
    load_collection,
    make_windows,
    prepare,
    split,
    standardize,
)
from promptcast.errors import ConfigError, InputError

# ---------------------------------------------------------------- loading


def test_wide_csv(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("1,2,3\n4,5,6")
    c = load_collection(p)
    assert c.lengths() == [3, 3]
    np.testing.assert_array_equal(c.series[1], [4, 5, 6])


def test_jsonl_and_long_match_csv(tmp_path):
    (tmp_path / "a.csv").write_text("1,2,3\n4,5,6\n")
    (tmp_path / "a.jsonl").write_text('{"id": "0", "values": [1, 2, 3]}\n{"id": "1", "values": [4, 5, 6]}\n')
    (tmp_path / "long.csv").write_text("id,value\n0,1\n1,4\n0,2\n1,5\n0,3\n1,6\n")
    a = load_collection(tmp_path / "a.csv")
    for other in (load_collection(tmp_path / "a.jsonl"), load_collection(tmp_path / "long.csv", "long", name="a")):
        assert other.ids == a.ids
        assert [s.tolist() for s in other.series] == [s.tolist() for s in a.series]


@pytest.mark.parametrize(
    "text,match",
    [
        ("1,2,3\n4,NaN,6\n", "row 2, column 2"),
        ("1,2,3\n4,,6\n", "row 2, column 2"),
        ("1,2,x\n", "row 1, column 3"),
        ("   \n", "empty"),
        ("1\n", "fewer than 2"),
    ],
)
def test_load_errors(tmp_path, text, match):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(InputError, match=match):
        load_collection(p)


def test_load_missing_file_and_schema(tmp_path):
    with pytest.raises(InputError, match="no such file"):
        load_collection(tmp_path / "nope.csv")
    p = tmp_path / "a.csv"
    p.write_text("1,2\n")
    with pytest.raises(ConfigError):
        load_collection(p, schema="parquet")


def test_jsonl_null_value(tmp_path):
    p = tmp_path / "a.jsonl"
    p.write_text('{"id": "x", "values": [1, null]}\n')
    with pytest.raises(InputError, match="line 1"):
        load_collection(p)


def test_registry_modes():
    whole = {n for n, d in DATASETS.items() if d.standardization is Standardization.WHOLE_SERIES}
    assert whole == {"covid19", "car_parts", "cif2016", "hospital", "tourism"}
    for n, d in DATASETS.items():
        assert (d.split_axis is SplitAxis.SERIES) == (n in whole)
    assert {n: d.context_length for n, d in DATASETS.items()} == {
        "covid19": 30, "nn5": 56, "car_parts": 12, "au_elec": 48,
        "cif2016": 12, "dominick": 8, "hospital": 12, "tourism": 24,
    }


# ---------------------------------------------------------------- subsampling


def test_au_elec_truncation():
    c = SeriesCollection.for_dataset("au_elec", np.zeros((5, 231_052)))
    out = apply_subsample(c)
    assert out.lengths() == [15_000] * 5


def test_dominick_sampling_reproducible():
    series = np.tile(np.arange(2.0), (100_014, 1))
    c = SeriesCollection.for_dataset("dominick", series)
    a, b = apply_subsample(c, seed=5), apply_subsample(c, seed=5)
    assert len(a.series) == 100 and a.ids == b.ids
    assert apply_subsample(c, seed=6).ids != a.ids


def test_subsample_absent_and_mismatched():
    c = SeriesCollection("x", [[1.0, 2.0]])
    assert apply_subsample(c) is c
    with pytest.raises(ConfigError):
        apply_subsample(SeriesCollection("x", [[1.0, 2.0]], subsample="au_elec"))


# ---------------------------------------------------------------- splitting


def test_time_split_examples():
    c = SeriesCollection("x", [np.arange(10.0), np.arange(212.0)])
    tr, va, te = split(c, SplitSpec())
    assert [len(p.series[0]) for p in (tr, va, te)] == [6, 2, 2]
    assert [len(p.series[1]) for p in (tr, va, te)] == [127, 42, 43]
    # temporal order and exhaustiveness
    joined = np.concatenate([tr.series[1], va.series[1], te.series[1]])
    np.testing.assert_array_equal(joined, np.arange(212.0))
    assert te.offsets == [8, 169]


def test_series_split_partition():
    c = SeriesCollection("x", [np.full(3, float(i)) for i in range(10)], split_axis="series")
    parts = split(c, SplitSpec(axis="series", shuffle_seed=3))
    assert [len(p.series) for p in parts] == [6, 2, 2]
    ids = [i for p in parts for i in p.ids]
    assert sorted(ids) == c.ids and len(set(ids)) == 10
    again = split(c, SplitSpec(axis="series", shuffle_seed=3))
    assert [p.ids for p in again] == [p.ids for p in parts]


def test_split_too_short():
    with pytest.raises(InputError):
        split(SeriesCollection("x", [np.arange(4.0)]), SplitSpec())
    with pytest.raises(InputError):
        split(SeriesCollection("x", [np.arange(4.0)] * 4), SplitSpec(axis="series"))


def test_split_spec_validation():
    with pytest.raises(ConfigError):
        SplitSpec(ratios=(0.5, 0.2, 0.2))


@settings(max_examples=50, deadline=None)
@given(st.integers(5, 5000))
def test_time_split_property(n):
    a, b = SplitSpec().cuts(n)
    assert 0 < a <= b <= n
    assert a == (6 * n) // 10 and b == (8 * n) // 10


# ---------------------------------------------------------------- windows


def test_make_windows_counts():
    w = make_windows(np.arange(10.0), 4, 4, 1)
    assert [o for o, _, _ in w] == [0, 1, 2]
    np.testing.assert_array_equal(w[2][2], [6, 7, 8, 9])
    assert len(make_windows(np.arange(8.0), 4, 4)) == 1
    assert make_windows(np.arange(7.0), 4, 4) == []
    for n, stride in ((50, 3), (100, 7), (33, 1)):
        assert len(make_windows(np.arange(float(n)), 5, 5, stride)) == (n - 10) // stride + 1


def test_standardize_example():
    pair = standardize([1, 2, 3], [4, 5], "per_window")
    assert pair.mean == 2.0 and abs(pair.std - 0.8165) < 1e-3
    np.testing.assert_allclose(pair.context, [-1.2247, 0, 1.2247], atol=1e-3)
    np.testing.assert_allclose(pair.target, [(4 - 2) / pair.std, 3 / pair.std])


def test_standardize_degenerate():
    assert standardize([5, 5, 5], [5, 5], "per_window") is None
    pair = standardize([5, 5, 5], [6, 7], "whole_series", (4.0, 2.0))
    assert np.isfinite(pair.context).all()
    with pytest.raises(ConfigError):
        standardize([1, 2], [3], "whole_series")


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_standardize_roundtrip(seed):
    r = np.random.default_rng(seed)
    ctx = r.normal(size=12) * r.uniform(0.1, 100) + r.uniform(-1e3, 1e3)
    tgt = r.normal(size=12)
    pair = standardize(ctx, tgt, "per_window")
    np.testing.assert_allclose(pair.raw_context(), ctx, atol=1e-9, rtol=0)
    np.testing.assert_allclose(pair.destandardize(pair.target), tgt, atol=1e-9, rtol=0)


def test_build_windows_skips_constant():
    c = SeriesCollection("x", [np.r_[np.zeros(8), np.arange(8.0)]], context_length=4)
    ws = build_windows(c, 4)
    assert ws.skipped == 2 and len(ws) == 1
    assert [w.offset for w in ws.windows] == [8]


def test_whole_series_uses_full_series_stats():
    s = np.arange(20.0)
    c = SeriesCollection("x", [s] * 5, context_length=2, standardization="whole_series", split_axis="series")
    data = prepare(c, seed=0, eval_stride=2)
    w = data.test.windows[0]
    assert (w.mean, w.std) == (float(s.mean()), float(s.std()))


def test_prepare_default_strides(sine_collection):
    data = prepare(sine_collection, seed=0)
    n_train = 48 - 16 + 1
    assert len(data.train) == 6 * n_train
    assert len(data.val) == 6 * 1
    offsets = [w.offset for w in data.train.windows[:3]]
    assert offsets == [0, 1, 2]


def test_prepare_jsonl_roundtrip(tmp_path, sine_collection):
    p = tmp_path / "s.jsonl"
    p.write_text("".join(json.dumps({"id": i, "values": s.tolist()}) + "\n"
                         for i, s in zip(sine_collection.ids, sine_collection.series)))
    c = load_collection(p, context_length=8)
    a, b = prepare(c), prepare(sine_collection)
    assert a.train.contexts().tobytes() == b.train.contexts().tobytes()
