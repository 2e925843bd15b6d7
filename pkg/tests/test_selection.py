import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_subsets_ok, kolmogorov_series, ks_exhaustive, ks_pvalue_series
from wearauth.errors import EmptySample, NoFeatureSurvives, TopKExceedsAvailable
from wearauth.selection import (FeatureSetSpec, kolmogorov_q, ks_pvalue, ks_statistic,
                                one_vs_rest_ks, pearson_matrix, prune_pearson, sd_scores,
                                select_features, select_ks, select_sd)


@pytest.mark.parametrize("a,b,d", [([1, 2, 3], [1, 2, 3], 0.0), ([1, 2], [3, 4], 1.0),
                                   ([1, 3], [2, 4], 0.5)])
def test_ks_statistic_examples(a, b, d):
    assert ks_statistic(a, b) == d


def test_ks_statistic_empty():
    with pytest.raises(EmptySample):
        ks_statistic([], [1.0])


samples = st.lists(st.integers(-5, 5).map(float), min_size=1, max_size=30)


@settings(max_examples=300, deadline=None)
@given(samples, samples)
def test_ks_statistic_matches_exhaustive(a, b):
    # small integer support forces many ties
    assert ks_statistic(a, b) == ks_exhaustive(a, b)


@settings(max_examples=100, deadline=None)
@given(samples, samples)
def test_ks_statistic_symmetric_and_bounded(a, b):
    d = ks_statistic(a, b)
    assert d == ks_statistic(b, a)
    assert 0 <= d <= 1


def test_ks_pvalue_examples():
    assert ks_pvalue(0.0, 10, 10) == 1.0
    assert ks_pvalue(1.0, 100, 100) < 1e-10
    assert ks_pvalue(0.5, 20, 20) == pytest.approx(ks_pvalue_series(0.5, 20, 20), abs=1e-10)


@pytest.mark.parametrize("lam", [0.01, 0.1, 0.3, 0.5, 1.0, 1.5, 3.0])
def test_kolmogorov_q_series(lam):
    assert kolmogorov_q(lam) == pytest.approx(kolmogorov_series(lam), abs=1e-10)


def test_kolmogorov_q_monotone():
    lams = np.linspace(0, 3, 200)
    q = [kolmogorov_q(v) for v in lams]
    assert all(a >= b for a, b in zip(q, q[1:]))
    assert q[0] == 1.0 and 0 <= q[-1] < 1e-6


def test_one_vs_rest_matches_pairwise(rng):
    X = np.round(rng.normal(0, 1, (60, 3)), 1)
    subj = np.repeat(["a", "b", "c"], 20)
    labels, D, counts = one_vs_rest_ks(X, subj)
    assert labels == ["a", "b", "c"] and list(counts) == [20, 20, 20]
    for s, lab in enumerate(labels):
        for j in range(3):
            assert D[s, j] == pytest.approx(ks_statistic(X[subj == lab, j], X[subj != lab, j]),
                                            abs=1e-12)


def _subjects(n_subj, per):
    return np.repeat([f"s{k:02d}" for k in range(n_subj)], per)


def test_select_ks_constant_feature_excluded(rng):
    subj = _subjects(5, 30)
    X = np.column_stack([np.ones(150), np.repeat(np.arange(5.0), 30)])
    spec = select_ks(X, subj, ["flat", "ident"])
    assert spec.selected == ["ident"]


def test_select_ks_subject_constant_included():
    subj = _subjects(10, 20)
    X = np.repeat(np.arange(10.0), 20)[:, None]
    spec = select_ks(X, subj, ["id"])
    assert spec.selected == ["id"] and spec.scores["id"] == 10


def test_select_ks_discriminative_fixture(rng):
    subj = _subjects(8, 40)
    codes = np.repeat(np.arange(8), 40)
    signal = [codes * 3.0 + rng.normal(0, 0.2, len(codes)) for _ in range(3)]
    noise = [rng.normal(0, 1, len(codes)) for _ in range(3)]
    X = np.column_stack(signal + noise)
    names = ["s1", "s2", "s3", "n1", "n2", "n3"]
    # brute-force check of the construction
    for j in range(6):
        sig = sum(ks_pvalue_series(ks_exhaustive(X[codes == k, j], X[codes != k, j]),
                                   40, 280) < 0.05 for k in range(8))
        assert (sig >= 4) == (j < 3)
    assert select_ks(X, subj, names).selected == ["s1", "s2", "s3"]


def test_select_ks_none_survive(rng):
    X = rng.normal(0, 1, (100, 2))
    with pytest.raises(NoFeatureSurvives):
        select_ks(X, _subjects(4, 25), ["a", "b"], alpha=1e-12)


def test_tau_rule(rng):
    subj = _subjects(8, 50)
    codes = np.repeat(np.arange(8), 50)
    X = (np.where(codes == 0, 10.0, 0.0) + rng.normal(0, 1, 400))[:, None]
    k = select_ks(X, subj, ["x"], tau=0.0).scores["x"]
    assert 1 <= k < 8
    assert select_ks(X, subj, ["x"], tau=k / 8).selected == ["x"]
    with pytest.raises(NoFeatureSurvives):
        select_ks(X, subj, ["x"], tau=(k + 0.5) / 8)


def _kept(names, counts=None):
    return FeatureSetSpec("KS", list(names), {}, dict(zip(names, counts or [1] * len(names))))


def test_pearson_copies(rng):
    x = rng.normal(0, 1, 50)
    X = np.column_stack([x, 2 * x + 1])
    spec = prune_pearson(X, ["a", "b"], _kept(["a", "b"]))
    assert spec.selected == ["a"]


def test_pearson_drops_lower_ks_count(rng):
    x = rng.normal(0, 1, 50)
    X = np.column_stack([x, -x])
    assert prune_pearson(X, ["a", "b"], _kept(["a", "b"], [3, 7])).selected == ["b"]


def test_pearson_noop(rng):
    X = rng.normal(0, 1, (500, 4))
    assert prune_pearson(X, list("abcd"), _kept("abcd"), rho=0.9).selected == list("abcd")


def test_pearson_four_feature_fixture(rng):
    z = rng.normal(0, 1, (400, 2))
    X = np.column_stack([z[:, 0], z[:, 0] + 0.1 * rng.normal(0, 1, 400),
                         z[:, 1], 0.5 * z[:, 0] + z[:, 1]])
    names = list("abcd")
    corr = pearson_matrix(X)
    spec = prune_pearson(X, names, _kept(names, [4, 3, 2, 1]), rho=0.9)
    kept_idx = [names.index(n) for n in spec.selected]
    assert brute_subsets_ok(corr, kept_idx, 0.9)
    # greedy never removes more than one feature per offending pair here
    assert len(spec.selected) == 3
    assert spec.selected == ["a", "c", "d"]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.3, 0.95))
def test_pearson_postcondition(seed, rho):
    r = np.random.default_rng(seed)
    base = r.normal(0, 1, (60, 2))
    X = np.column_stack([base @ r.normal(0, 1, 2) + 0.3 * r.normal(0, 1, 60) for _ in range(6)])
    names = [f"f{j}" for j in range(6)]
    spec = prune_pearson(X, names, _kept(names, list(r.integers(0, 5, 6))), rho=rho)
    idx = [names.index(n) for n in spec.selected]
    assert spec.selected and brute_subsets_ok(pearson_matrix(X), idx, rho)


def test_pearson_matrix_matches_numpy(rng):
    X = rng.normal(0, 1, (30, 5))
    X[:, 4] = 2.0
    r = pearson_matrix(X)
    np.testing.assert_allclose(r[:4, :4], np.abs(np.corrcoef(X[:, :4].T)), atol=1e-12)
    assert (r[4] == 0).all()


def test_sd_identical_means_ranked_last():
    subj = _subjects(3, 2)
    X = np.column_stack([[1, -1, 1, -1, 1, -1], [0, 0, 5, 5, 10, 10], [1, 2, 3, 4, 5, 6.0]])
    scores = sd_scores(X, subj)
    assert scores[0] == pytest.approx(0, abs=1e-15)
    spec = select_sd(X, subj, list("abc"), _kept("abc"), 3)
    assert spec.selected[-1] == "a"


def test_sd_top_k_identity(rng):
    X = rng.normal(0, 1, (20, 3))
    spec = select_sd(X, _subjects(4, 5), list("abc"), _kept("abc"), 3)
    assert sorted(spec.selected) == list("abc")


def test_sd_hand_computed_fixture():
    # two subjects, two windows each; z-scores computed by hand below
    subj = np.array(["p", "p", "q", "q"])
    X = np.array([[0, 0, 1, 5, 1],
                  [2, 1, 1, 5, 2],
                  [4, 2, 3, 5, 3],
                  [6, 4, 3, 5, 4.0]])
    expected = []
    for col in X.T:
        sd = np.sqrt(sum((v - col.mean()) ** 2 for v in col) / 3)
        z = (col - col.mean()) / sd if sd > 0 else col - col.mean()
        m = [z[:2].mean(), z[2:].mean()]
        expected.append(abs(m[0] - m[1]) / np.sqrt(2))
    np.testing.assert_allclose(sd_scores(X, subj), expected, atol=1e-12)
    spec = select_sd(X, subj, list("abcde"), _kept("abcde"), 2)
    want = [list("abcde")[i] for i in np.argsort(-np.array(expected), kind="stable")[:2]]
    assert spec.selected == want


def test_sd_top_k_exceeds():
    X = np.zeros((4, 2))
    with pytest.raises(TopKExceedsAvailable):
        select_sd(X, _subjects(2, 2), ["a", "b"], _kept("ab"), 3)
    spec = select_sd(X, _subjects(2, 2), ["a", "b"], _kept("ab"), 3, strict=False)
    assert len(spec.selected) == 2


@pytest.mark.parametrize("approach", ["KS", "PC", "SD"])
def test_select_features_subset_of_ks(rng, approach):
    subj = _subjects(6, 30)
    codes = np.repeat(np.arange(6), 30)
    X = np.column_stack([codes + rng.normal(0, 0.3, 180), codes * 2 + rng.normal(0, 0.3, 180),
                         rng.normal(0, 1, 180), (codes % 2) + rng.normal(0, 0.1, 180)])
    names = list("abcd")
    ks = select_features("KS", X, subj, names)
    spec = select_features(approach, X, subj, names, sd_top_k=2)
    assert set(spec.selected) <= set(ks.selected)
    assert spec.approach == approach


def test_feature_set_json_round_trip():
    spec = FeatureSetSpec("PC", ["C_mu", "H_p95"], {"alpha": 0.05, "rho": 0.9},
                          {"C_mu": 4, "H_p95": 7})
    back = FeatureSetSpec.from_json(spec.to_json())
    assert back == spec
