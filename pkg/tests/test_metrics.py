import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from centerdepth.errors import EmptyInput, EmptyMask, OutOfBounds
from centerdepth.metrics import (
    BIN_EDGES, DepthPair, MetricsReport, bin_index, binned_mae, build_report, delta_metrics,
    error_metrics, extract_center_depth, extract_seg_depth, read_pairs, write_pairs,
)

from oracles import brute_metrics


def test_delta_examples():
    gt = np.full(3, 10.0)
    assert delta_metrics(gt, gt) == (1.0, 1.0, 1.0)
    assert delta_metrics(np.array([10.5, 11.5, 12.5]), gt, 1.10) == (1 / 3, 2 / 3, 1.0)
    # a ratio equal to the threshold is excluded (strict comparison)
    assert delta_metrics([1.10], [1.0], 1.10) == (0.0, 1.0, 1.0)
    assert delta_metrics([1.25], [1.0], 1.25)[0] == 0.0


def test_delta_is_symmetric():
    assert delta_metrics([10.0], [11.5], 1.10) == delta_metrics([11.5], [10.0], 1.10)


def test_error_examples():
    assert error_metrics([5.0, 6.0], [5.0, 6.0]) == (0.0, 0.0, 0.0)
    mre, mae, rmse = error_metrics([102.0], [100.0])
    assert (mre, mae, rmse) == pytest.approx((0.02, 2.0, 2.0), rel=1e-15)
    assert error_metrics([13.0, 7.0], [10.0, 10.0])[1:] == (3.0, 3.0)
    _, mae, rmse = error_metrics([11.0, 15.0], [10.0, 10.0])
    assert mae == 3.0 and rmse == pytest.approx(math.sqrt(13))


def test_empty_and_invalid_inputs():
    with pytest.raises(EmptyInput):
        error_metrics([], [])
    with pytest.raises(EmptyInput):
        build_report([])
    with pytest.raises(ValueError):
        error_metrics([1.0], [0.0])


def test_binned_examples():
    gt = np.array([10.0, 60.0, 110.0, 160.0])
    pred = gt + np.array([1.0, -2.0, 3.0, -4.0])
    bins = binned_mae(pred, gt)
    assert [b.mae for b in bins.values()] == [1.0, 2.0, 3.0, 4.0]
    assert [b.count for b in bins.values()] == [1, 1, 1, 1]
    assert list(bins) == ["R1", "R2", "R3", "R4"]
    assert bin_index([50.0]).tolist() == [1]
    assert bin_index([200.0]).tolist() == [3]
    assert bin_index([0.0, 250.0]).tolist() == [0, -1]
    one = binned_mae([12.0, 13.0], [10.0, 11.0])
    assert [b.count for b in one.values()] == [2, 0, 0, 0]
    assert one["R2"].mae is None


def test_bin_edges_default():
    assert BIN_EDGES == (0.0, 50.0, 100.0, 150.0, 200.0)


def test_extract_center_depth():
    r = np.zeros((20, 20))
    r[10, 10] = 42.0
    assert extract_center_depth(r, (10.2, 9.8)) == 42.0
    assert extract_center_depth(r, (10, 10)) == 42.0
    with pytest.raises(OutOfBounds):
        extract_center_depth(r, (25, 3))


def test_extract_seg_depth():
    r = np.full((8, 8), 30.0)
    m = np.zeros((8, 8), bool)
    m[2:5, 1:3] = True
    assert extract_seg_depth(r, m) == 30.0
    r[0, 0], r[0, 1] = 10.0, 20.0
    m = np.zeros((8, 8), bool)
    m[0, :2] = True
    assert extract_seg_depth(r, m) == 15.0
    with pytest.raises(EmptyMask):
        extract_seg_depth(r, np.zeros((8, 8), bool))
    rng = np.random.default_rng(0)
    big = rng.uniform(1, 200, (100, 100))
    m = np.zeros(10000, bool)
    m[rng.choice(10000, 1000, replace=False)] = True
    m = m.reshape(100, 100)
    ref = sum(float(v) for v in big[m]) / 1000
    assert abs(extract_seg_depth(big, m) - ref) < 1e-9


def pairs_from(pred, gt):
    return [DepthPair(float(p), float(g), f"{i:06d}", i) for i, (p, g) in enumerate(zip(pred, gt))]


def test_report_examples(tmp_path):
    gt = np.array([10.0, 60.0, 110.0])
    rep = build_report(pairs_from(gt, gt))
    assert (rep.delta1, rep.delta2, rep.delta3) == (1, 1, 1)
    assert (rep.mre, rep.mae, rep.rmse) == (0, 0, 0)
    rep = build_report(pairs_from([10.5, 11.5, 12.5], [10.0] * 3))
    assert (rep.delta1, rep.delta2, rep.delta3) == (1 / 3, 2 / 3, 1.0)
    back = MetricsReport.from_json(rep.to_json())
    assert back == rep
    assert "MAE_R1" in rep.table()


def test_pairs_file_round_trip(tmp_path):
    pairs = pairs_from([1.5, 2.25], [1.0, 2.0])
    write_pairs(tmp_path / "p.jsonl", pairs)
    assert read_pairs(tmp_path / "p.jsonl") == pairs


pair_sets = st.lists(
    st.tuples(st.floats(0.5, 260), st.floats(0.5, 200)), min_size=1, max_size=40
)


@given(pair_sets)
def test_metric_invariants(items):
    pred = np.array([p for p, _ in items])
    gt = np.array([g for _, g in items])
    d1, d2, d3 = delta_metrics(pred, gt)
    assert d1 <= d2 <= d3
    mre, mae, rmse = error_metrics(pred, gt)
    assert rmse >= mae * (1 - 1e-12) and mae >= 0 and mre >= 0
    bins = binned_mae(pred, gt)
    assert sum(b.count for b in bins.values()) == len(items)
    weighted = sum(b.mae * b.count for b in bins.values() if b.count)
    assert weighted / len(items) == pytest.approx(mae, rel=1e-12, abs=1e-12)


@given(pair_sets, st.randoms(use_true_random=False))
def test_permutation_invariance(items, rnd):
    shuffled = list(items)
    rnd.shuffle(shuffled)
    a = build_report(pairs_from(*zip(*items)))
    b = build_report(pairs_from(*zip(*shuffled)))
    assert (a.delta1, a.delta2, a.delta3) == (b.delta1, b.delta2, b.delta3)
    assert a.mae == pytest.approx(b.mae, rel=1e-12)
    assert a.rmse == pytest.approx(b.rmse, rel=1e-12)


def test_brute_force_agreement():
    rng = np.random.default_rng(9)
    for _ in range(500):
        n = int(rng.integers(1, 60))
        gt = rng.uniform(1, 200, n)
        pred = gt * rng.uniform(0.7, 1.4, n)
        rep = build_report(pairs_from(pred, gt))
        ref = brute_metrics(pred, gt, 1.10, BIN_EDGES)
        got = (rep.delta1, rep.delta2, rep.delta3, rep.mre, rep.mae, rep.rmse)
        for a, b in zip(got, ref[:6]):
            assert abs(a - b) <= 1e-12 * max(1.0, abs(b))
        for stat, (mae, count) in zip(rep.per_bin_mae.values(), ref[6]):
            assert stat.count == count
            assert (stat.mae is None) == (mae is None)
            if mae is not None:
                assert abs(stat.mae - mae) <= 1e-12 * max(1.0, mae)
