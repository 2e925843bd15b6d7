import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wearauth.errors import EmptyScores, EmptyTestSet, InsufficientWindows
from wearauth.evaluation import (DEFAULT_PROBABILITY_GRID, EvalReport, Metrics, SplitSpec,
                                 SubjectResult, aggregate_report, compute_eer, error_curves,
                                 evaluate_scores, make_split, mean_sweep, sweep_outlier_fraction,
                                 sweep_scores, sweep_to_csv)
from wearauth.svm import KernelSpec, TrainConfig, train_unary


def _pool(sizes):
    out, start = {}, 0
    for k, n in enumerate(sizes):
        out[f"s{k}"] = np.arange(start, start + n)
        start += n
    return out


def test_split_sizes_hundred_windows():
    pools = _pool([100, 60, 60, 60])
    sp = make_split(pools, "s0", SplitSpec(seed=1))
    assert (len(sp.train_pos), len(sp.test_pos)) == (75, 25)
    assert (len(sp.train_neg), len(sp.test_neg)) == (75, 25)


def test_split_disjoint_and_sourced():
    pools = _pool([40, 30, 20, 10])
    sp = make_split(pools, "s1", SplitSpec(seed=3))
    own = set(pools["s1"])
    assert set(sp.train_pos) | set(sp.test_pos) == own
    assert not set(sp.train_pos) & set(sp.test_pos)
    neg = list(sp.train_neg) + list(sp.test_neg)
    assert len(neg) == len(set(neg)) and not set(neg) & own


def test_split_negatives_spread_over_impostors():
    pools = _pool([90, 50, 50, 50])
    sp = make_split(pools, "s0", SplitSpec(seed=0))
    per = [len(set(sp.train_neg) & set(pools[s])) for s in ("s1", "s2", "s3")]
    assert max(per) - min(per) <= 1


def test_split_scarce_impostor_topped_up():
    pools = _pool([80, 5, 200, 200])
    sp = make_split(pools, "s0", SplitSpec(seed=0))
    assert len(sp.train_neg) == 60 and len(sp.test_neg) == 20


def test_split_insufficient():
    with pytest.raises(InsufficientWindows):
        make_split(_pool([7, 50]), "s0")


def test_split_deterministic():
    pools = _pool([50, 40, 30])
    a = make_split(pools, "s2", SplitSpec(seed=9))
    b = make_split(pools, "s2", SplitSpec(seed=9))
    c = make_split(pools, "s2", SplitSpec(seed=10))
    for f in ("train_pos", "train_neg", "test_pos", "test_neg"):
        np.testing.assert_array_equal(getattr(a, f), getattr(b, f))
    assert not np.array_equal(a.train_pos, c.train_pos)


def test_split_chronological():
    pools = _pool([20, 20])
    sp = make_split(pools, "s0", SplitSpec(chronological=True))
    np.testing.assert_array_equal(sp.train_pos, np.arange(15))


def test_split_unbalanced_uses_all_impostors():
    pools = _pool([20, 40, 40])
    sp = make_split(pools, "s0", SplitSpec(balanced=False))
    assert len(sp.train_neg) + len(sp.test_neg) == 80


def test_metrics_perfect():
    m = evaluate_scores([2, 3, 4], [-1, -2], 0.5)
    assert (m.acc, m.fpr, m.fnr) == (1.0, 0.0, 0.0)


def test_metrics_accept_all():
    m = evaluate_scores([1, 2], [0, 5], -np.inf)
    assert (m.fpr, m.fnr) == (1.0, 0.0)


def test_metrics_fixture():
    pos = [1.0] * 8 + [-1.0] * 2
    neg = [-1.0] * 9 + [0.5]
    m = evaluate_scores(pos, neg, 0.0)
    assert m == Metrics(tp=8, fn=2, tn=9, fp=1)
    assert (m.acc, m.fpr, m.fnr) == pytest.approx((0.85, 0.1, 0.2))


def test_metrics_empty():
    with pytest.raises(EmptyTestSet):
        evaluate_scores([], [1.0])


def test_eer_separated():
    assert compute_eer([3, 4, 5], [0, 1, 2]).rate == 0.0


def test_eer_identical():
    assert compute_eer([1, 2, 3, 4], [1, 2, 3, 4]).rate == pytest.approx(0.5)


def test_eer_fixture():
    e = compute_eer([0.9, 0.8, 0.4], [0.6, 0.3, 0.2])
    assert e.rate == pytest.approx(1 / 3)
    assert 0.4 < e.threshold < 0.6


def test_eer_empty():
    with pytest.raises(EmptyScores):
        compute_eer([], [1.0])


def _brute_eer_bracket(pos, neg):
    """Every threshold on a dense grid; return the FNR/FPR values at the
    last threshold with FNR <= FPR and the first with FNR >= FPR."""
    grid = np.unique(np.concatenate([pos, neg]))
    grid = np.concatenate([[grid[0] - 1], grid, [grid[-1] + 1]])
    fine = np.unique(np.concatenate([grid, (grid[1:] + grid[:-1]) / 2]))
    fnr = np.array([(pos < t).mean() for t in fine])
    fpr = np.array([(neg >= t).mean() for t in fine])
    below = np.flatnonzero(fnr <= fpr)[-1]
    above = np.flatnonzero(fnr >= fpr)[0]
    lo = min(fnr[below], fpr[below], fnr[above], fpr[above])
    hi = max(fnr[below], fpr[below], fnr[above], fpr[above])
    return lo, hi


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 20), min_size=1, max_size=25),
       st.lists(st.integers(0, 20), min_size=1, max_size=25))
def test_eer_bracketed_by_brute_force(pos, neg):
    pos, neg = np.array(pos, float), np.array(neg, float)
    e = compute_eer(pos, neg)
    lo, hi = _brute_eer_bracket(pos, neg)
    assert lo - 1e-12 <= e.rate <= hi + 1e-12
    # with ties the error curves jump by the tie multiplicity
    fnr, fpr = error_curves(pos, neg, [e.threshold])
    worst_jump = max(np.unique(pos, return_counts=True)[1].max() / len(pos),
                     np.unique(neg, return_counts=True)[1].max() / len(neg))
    assert abs(fnr[0] - fpr[0]) <= 2 * worst_jump + 1e-12


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(-1000, 1000), min_size=2, max_size=60, unique=True),
       st.integers(1, 59))
def test_eer_resolution_without_ties(values, cut):
    cut = min(cut, len(values) - 1)
    pos, neg = np.array(values[:cut], float), np.array(values[cut:], float)
    e = compute_eer(pos, neg)
    fnr, fpr = error_curves(pos, neg, [e.threshold])
    assert abs(fnr[0] - fpr[0]) <= 1 / min(len(pos), len(neg)) + 1e-12


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=30),
       st.lists(st.floats(0, 1), min_size=1, max_size=30))
def test_threshold_sweep_monotone(pos, neg):
    rows = sweep_scores(pos, neg, DEFAULT_PROBABILITY_GRID)
    assert rows[0].fnr == 0.0
    assert all(a.fpr >= b.fpr and a.fnr <= b.fnr for a, b in zip(rows, rows[1:]))
    assert sweep_scores(pos, neg, [1 + 1e-9])[0].fpr == 0.0


def test_mean_sweep_and_csv():
    a = sweep_scores([0.9, 0.2], [0.1, 0.6], [0.0, 0.5, 1.0])
    b = sweep_scores([0.7, 0.8], [0.3, 0.4], [0.0, 0.5, 1.0])
    rows = mean_sweep([a, b])
    assert rows[1].fpr == pytest.approx(0.25) and rows[1].fnr == pytest.approx(0.25)
    buf = io.StringIO()
    sweep_to_csv(rows, buf)
    assert buf.getvalue().splitlines()[0] == "threshold,ACC,FPR,FNR"


def test_outlier_sweep_single_value_matches_direct(rng):
    Xtr = rng.normal(0, 1, (40, 3))
    Xp, Xn = rng.normal(0, 1, (15, 3)), rng.normal(2, 1, (15, 3))
    kernel, cfg = KernelSpec.gaussian(0.3), TrainConfig(nu=0.2)
    (row,) = sweep_outlier_fraction(Xtr, Xp, Xn, [0.2], kernel, cfg)
    model = train_unary(Xtr, kernel, cfg)
    m = evaluate_scores(model.decision_function(Xp), model.decision_function(Xn))
    assert (row.acc, row.fpr, row.fnr) == (m.acc, m.fpr, m.fnr)


def test_outlier_sweep_large_nu_rejects_genuine(rng):
    Xtr = rng.normal(0, 1, (60, 2))
    Xp, Xn = rng.normal(0, 1, (30, 2)), rng.normal(4, 1, (30, 2))
    rows = sweep_outlier_fraction(Xtr, Xp, Xn, [0.0, 0.95], KernelSpec.gaussian(0.5))
    assert rows[0].nu_effective == pytest.approx(1 / 60)
    assert rows[1].fnr > 0.7 and rows[1].fnr > rows[0].fnr


def _report(accs):
    rows = [SubjectResult(f"s{k}", a, 1 - a, 0.0) for k, a in enumerate(accs)]
    return aggregate_report(rows, approach="KS", combo="CM", period="sedentary", kind="binary",
                            n=10, W=300)


def test_aggregate_two_subjects():
    rep = _report([0.8, 0.9])
    assert rep.aggregate["ACC"]["mu"] == pytest.approx(0.85)
    assert rep.aggregate["ACC"]["sigma"] == pytest.approx(0.0707, abs=1e-4)
    assert rep.sigma_defined and rep.N == 2


def test_aggregate_single_subject():
    rep = _report([0.8])
    assert rep.aggregate["ACC"]["sigma"] == 0.0 and not rep.sigma_defined


def test_report_round_trip():
    rep = _report([0.8, 0.9, 0.95])
    back = EvalReport.from_dict(json.loads(rep.to_json()))
    assert back.to_json() == rep.to_json()
    lines = rep.to_csv().splitlines()
    assert lines[0] == "subject_id,ACC,FPR,FNR" and len(lines) == 1 + 3 + 2
