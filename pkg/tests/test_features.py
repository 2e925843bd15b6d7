import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import window_features
from wearauth.data import ActivityLevel, Window, WindowSet
from wearauth.errors import DegenerateWindow
from wearauth.features import (FEATURES, Combo, FeatureMatrix, channel_features, count_peaks,
                               extract_features, feature_matrix, feature_names, periodogram)

IDX = {f: i for i, f in enumerate(FEATURES)}
finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
windows5 = arrays(np.float64, 5, elements=finite)


def feats(x):
    return dict(zip(FEATURES, channel_features(np.asarray(x, float))[0]))


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol * max(1.0, abs(b))


def test_constant_window():
    f = feats([60] * 5)
    expected = dict(mu=60, sigma=0, sigma2=0, cov=0, max=60, min=60, ran=0, coran=0, iqr=0,
                    np=0, rms=60, E=18000)
    for k, v in expected.items():
        assert f[k] == pytest.approx(v, abs=1e-12), k


def test_ramp_window():
    f = feats([1, 2, 3, 4, 5])
    assert f["mu"] == 3
    assert f["sigma"] == pytest.approx(1.5811, abs=1e-4)
    assert f["ran"] == 4
    assert f["coran"] == pytest.approx(4 / 6)
    assert f["p50"] == 3
    assert f["mad_mu"] == pytest.approx(1.2)
    assert f["rss"] == pytest.approx(math.sqrt(55))


def test_zero_window_guards():
    f = feats([0] * 5)
    for k in ("cov", "coran", "p2rms", "snr", "coi", "gamma", "kappa", "f_mu", "f_Mdn"):
        assert f[k] == 0.0, k


def test_periodogram_constant():
    freqs, power = periodogram([3.0] * 5)
    np.testing.assert_allclose(freqs, [0.2, 0.4])
    np.testing.assert_allclose(power, 0, atol=1e-24)


def test_periodogram_alternating():
    _, power = periodogram([1, -1, 1, -1, 1])
    assert power[1] > power[0]


def test_periodogram_single_cycle():
    x = np.cos(2 * np.pi * np.arange(5) / 5)
    _, power = periodogram(x)
    assert power[0] == pytest.approx(1.25)
    assert power[1] == pytest.approx(0, abs=1e-20)


@pytest.mark.parametrize("x,n", [([1, 3, 1, 3, 1], 2), ([1, 2, 3, 4, 5], 0), ([1, 2, 2, 1, 0], 0)])
def test_count_peaks(x, n):
    assert count_peaks(x) == n


def test_non_finite_sample():
    with pytest.raises(DegenerateWindow):
        channel_features([[1, 2, np.nan, 4, 5]])


def test_oracle_agreement(rng):
    X = np.vstack([rng.normal(70, 10, (200, 5)), rng.poisson(3, (100, 5)),
                   np.round(rng.normal(0, 2, (100, 5))), rng.uniform(-5, 5, (100, 5))])
    got = channel_features(X)
    for row, x in zip(got, X):
        want = window_features(list(x))
        for f in FEATURES:
            assert close(row[IDX[f]], want[f]), (f, x)


@settings(max_examples=200, deadline=None)
@given(windows5)
def test_oracle_agreement_hypothesis(x):
    got, want = feats(x), window_features(list(x))
    for f in FEATURES:
        # skew/kurtosis and ratios are ill-conditioned for near-constant windows
        if f in ("gamma", "kappa", "cov", "snr", "coi", "coran", "f_mu", "f_Mdn") \
                and np.ptp(x) < 1e-6 * max(1, np.abs(x).max()):
            continue
        assert close(got[f], want[f], 1e-7), f


dyadic5 = arrays(np.float64, 5, elements=st.integers(-4000, 4000).map(lambda k: k / 4))


@settings(max_examples=100, deadline=None)
@given(dyadic5, st.integers(-100, 100))
def test_shift(x, c):
    a, b = feats(x), feats(x + c)
    for f in ("mu", "max", "min", "p25", "p50", "p75", "p95"):
        assert b[f] == pytest.approx(a[f] + c, abs=1e-8)
    for f in ("sigma", "sigma2", "ran", "iqr", "mad_mu", "mad_Mdn", "np"):
        assert b[f] == pytest.approx(a[f], rel=1e-6, abs=1e-6), f
    if np.ptp(x) > 1e-3:
        for f in ("f_mu", "f_Mdn"):
            assert b[f] == pytest.approx(a[f], abs=1e-9), f


@settings(max_examples=100, deadline=None)
@given(windows5, st.floats(0.01, 100))
def test_scale(x, c):
    a, b = feats(x), feats(c * x)
    for f in ("sigma", "ran", "iqr", "rms", "rss"):
        assert b[f] == pytest.approx(c * a[f], rel=1e-9, abs=1e-9), f
    if np.ptp(x) > 1e-3:
        for f in ("cov", "coran", "coi", "p2rms", "snr", "gamma"):
            assert b[f] == pytest.approx(a[f], rel=1e-6, abs=1e-9), f


@settings(max_examples=200, deadline=None)
@given(windows5)
def test_ordering_and_identities(x):
    f = feats(x)
    chain = [f[k] for k in ("min", "p25", "p50", "p75", "p95", "max")]
    assert all(a <= b + 1e-12 for a, b in zip(chain, chain[1:]))
    assert f["E"] == pytest.approx(5 * f["P"])
    assert f["E"] == pytest.approx(f["rss"] ** 2, rel=1e-12, abs=1e-12)
    assert f["P"] == pytest.approx(f["rms"] ** 2, rel=1e-12, abs=1e-12)
    assert 0 <= f["np"] <= 2
    assert all(np.isfinite(list(f.values())))


def _window(level=ActivityLevel.LIGHT):
    samples = np.column_stack([np.linspace(1, 2, 5), np.arange(5) * 10.0,
                               np.full(5, 1.5), 70 + np.arange(5)])
    return Window("u", 10, level, samples)


def test_extract_features_layout():
    fv = extract_features(_window(), "HC", include_activity=True)
    assert list(fv.values)[:27] == [f"C_{f}" for f in FEATURES]
    assert list(fv.values)[27] == "H_mu"
    assert fv.values["activity"] == 1.0
    assert len(fv.values) == 2 * 27 + 1
    assert fv.window_ref == ("u", 10)
    assert fv.values["H_mu"] == 72


def test_combo_naming():
    assert Combo.parse("hc").name == "CH"
    assert Combo.parse("MSHC").name == "CSMH"
    with pytest.raises(ValueError):
        Combo.parse("CX")
    assert len(feature_names("CSMH")) == 108


def _windowset(n=6):
    rng = np.random.default_rng(3)
    return WindowSet(np.array(["a", "b"] * (n // 2), dtype=object), np.arange(n) * 5,
                     np.array([1, 2, 3] * (n // 3), dtype=np.int8), rng.normal(5, 1, (n, 5, 4)))


def test_feature_matrix_matches_per_window():
    ws = _windowset()
    fm = feature_matrix(ws, "CSMH", include_activity=True)
    for i, w in enumerate(ws):
        fv = extract_features(w, "CSMH", include_activity=True)
        np.testing.assert_allclose(fm.values[i], list(fv.values.values()), rtol=1e-13)


def test_feature_matrix_csv_round_trip():
    fm = feature_matrix(_windowset(), "CM", include_activity=True)
    buf = io.StringIO()
    fm.to_csv(buf)
    assert buf.getvalue().startswith("subject_id,start_minute,activity_level,C_mu,")
    back = FeatureMatrix.read_csv(buf.getvalue())
    assert back.names == fm.names
    np.testing.assert_array_equal(back.values, fm.values)
    np.testing.assert_array_equal(back.activity_level, fm.activity_level)
    assert list(back.subject_id) == list(fm.subject_id)


def test_restrict_keeps_combo_columns():
    fm = feature_matrix(_windowset(), "CSMH")
    sub = fm.restrict("CM")
    assert sub.names == feature_names("CM")
    np.testing.assert_array_equal(sub.values, fm.columns(feature_names("CM")))
