import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spshm import ad
from spshm.ad import (
    AR,
    AnomalyDetector,
    AnomalyInterval,
    ForecasterSpec,
    ModelInfo,
    MovingAverage,
    ParamSpec,
    Persistence,
    SeasonalNaive,
    calibrate,
    detect,
    detect_scores,
    extract_intervals,
    quantile_threshold,
)
from spshm.core import epoch_to_text
from spshm.scenarios import ad_scenario
from spshm.sim import run


def sorted_quantile(values, q):
    """Linear-interpolation quantile by sorting and indexing."""
    s = sorted(values)
    h = (len(s) - 1) * q
    lo = math.floor(h)
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (h - lo) * (s[hi] - s[lo])


class TestForecasters:
    def test_ar1_recovers_coefficient(self):
        x = 0.9 ** np.arange(200) * 5.0
        m = AR(1).fit(x)
        intercept, phi = m.coef[0]
        assert phi == pytest.approx(0.9, abs=1e-9)
        assert intercept == pytest.approx(0.0, abs=1e-9)

    def test_persistence_is_parameterless(self):
        assert Persistence().fit(np.arange(10.0)).params() == {}
        assert ad.DEFAULT_REGISTRY.get("Persistence").params == ()

    def test_seasonal_naive_zero_residual_on_periodic_data(self):
        t = np.arange(1000)
        x = np.stack([np.sin(2 * np.pi * t / 50), (t % 50 > 20).astype(float)], axis=1)
        m = SeasonalNaive(50).fit(x[:500])
        assert np.max(ad.score(m, x[500:])) < 1e-12

    def test_moving_average(self):
        m = MovingAverage(3).fit(np.arange(10.0))
        np.testing.assert_allclose(m.predict(np.array([10.0, 11.0])).ravel(), [8.0, 9.0])

    def test_insufficient_data(self):
        with pytest.raises(ad.InsufficientDataError):
            SeasonalNaive(100).fit(np.zeros(50))

    def test_fit_is_deterministic(self):
        x = np.random.default_rng(0).normal(size=(300, 3))
        a, b = AR(3).fit(x), AR(3).fit(x)
        np.testing.assert_array_equal(a.coef, b.coef)


class TestCalibration:
    def test_matches_sorted_quantile_oracle(self):
        r = np.array([0.01] * 99 + [0.5])
        t = quantile_threshold(r, 0.995)
        assert 0.01 < t < 0.5
        assert t == pytest.approx(sorted_quantile(r, 0.995), abs=1e-15)

    def test_q_one_is_max(self):
        r = np.random.default_rng(1).random(57)
        assert quantile_threshold(r, 1.0) == r.max()

    def test_constant_series_gives_zero_with_warning(self):
        m = Persistence().fit(np.ones((20, 2)))
        with pytest.warns(ad.DegenerateResidualWarning):
            assert calibrate(m, np.ones((10, 2))) == 0.0

    @given(st.lists(st.floats(0, 10, allow_nan=False), min_size=2, max_size=200),
           st.floats(0.01, 1.0), st.floats(0.01, 1.0))
    def test_monotone_in_q(self, r, q1, q2):
        if not any(r):
            return
        q1, q2 = sorted((q1, q2))
        assert quantile_threshold(r, q1) <= quantile_threshold(r, q2)
        assert quantile_threshold(r, q1) == pytest.approx(sorted_quantile(r, q1), rel=1e-12, abs=1e-12)


class TestIntervals:
    def test_point_and_interval(self):
        flags = np.zeros(20, bool)
        flags[[5, 6, 7, 12]] = True
        ivs = extract_intervals(flags)
        assert ivs == [AnomalyInterval(5, 7), AnomalyInterval(12, 12)]
        assert ivs[1].is_point and ivs[0].seconds == 3

    def test_render_formats(self):
        t0 = 1729277003  # 2024-10-18 18:43:23
        assert AnomalyInterval(t0, t0).render() == "['2024-10-18 18:43:23']"
        assert AnomalyInterval(t0, t0 + 2).render() == "['2024-10-18 18:43:23', '2024-10-18 18:43:25']"
        assert epoch_to_text(t0) == "2024-10-18 18:43:23"

    def test_start_after_end_rejected(self):
        with pytest.raises(ValueError):
            AnomalyInterval(3, 2)

    def test_constant_test_series_has_no_intervals(self):
        m = Persistence().fit(np.ones((10, 2)))
        res = detect(m, 0.0, np.ones((50, 2)))
        assert res.intervals == [] and res.anomaly_ratio == 0.0

    @settings(max_examples=200)
    @given(st.lists(st.booleans(), min_size=0, max_size=400), st.integers(0, 10**9))
    def test_partition_exact(self, bits, t0):
        flags = np.array(bits, dtype=bool)
        times = np.arange(t0, t0 + len(flags))
        ivs = extract_intervals(flags, times)
        covered = np.zeros(len(flags), bool)
        for a, b in zip(ivs, ivs[1:]):
            assert a.end + 1 < b.start  # sorted, disjoint and maximal
        for iv in ivs:
            assert iv.start <= iv.end
            lo, hi = iv.start - t0, iv.end - t0
            assert not covered[lo:hi + 1].any()
            covered[lo:hi + 1] = True
        np.testing.assert_array_equal(covered, flags)
        # re-extracting from the covered set is idempotent
        assert extract_intervals(covered, times) == ivs

    @given(st.lists(st.floats(0, 1, allow_nan=False), min_size=1, max_size=300), st.floats(0, 1))
    def test_ratio_and_antitone(self, scores, thr):
        r = detect_scores(np.array(scores), thr)
        assert r.anomaly_ratio == sum(s > thr for s in scores) / len(scores)
        higher = detect_scores(np.array(scores), min(1.0, thr + 0.1))
        assert not np.any(higher.flags & ~r.flags)


class TestRegistry:
    def test_describe_lists_defaults_that_validate(self):
        rows = ad.describe_models()
        assert [r[0] for r in rows] == ["Persistence", "SeasonalNaive", "AR", "MovingAverage"]
        for name, params, defaults, guidance in rows:
            info = ad.DEFAULT_REGISTRY.get(name)
            assert info.validate(defaults)
            assert guidance

    def test_register_one_more(self):
        reg = ad.DEFAULT_REGISTRY.copy()
        n = len(reg.describe())
        reg.register(ModelInfo("Zero", (), "predicts zero", lambda: Persistence()))
        assert len(reg.describe()) == n + 1
        assert len(ad.DEFAULT_REGISTRY) == n
        with pytest.raises(ValueError):
            reg.register(ModelInfo("Zero", (), "again", lambda: Persistence()))

    def test_lookup_case_insensitive(self):
        assert ad.DEFAULT_REGISTRY.get("seasonalnaive").name == "SeasonalNaive"
        with pytest.raises(KeyError):
            ad.DEFAULT_REGISTRY.get("LSTM")

    def test_param_bounds(self):
        with pytest.raises(ValueError):
            ForecasterSpec("AR", {"order": 0}).build()
        with pytest.raises(ValueError):
            ForecasterSpec("AR", {"depth": 3}).build()
        spec = ParamSpec("batch_size", int, 64, 1)
        assert spec.validate(64.0) == 64
        with pytest.raises(ValueError):
            spec.validate("64")

    def test_batch_size_does_not_change_scores(self):
        x = np.random.default_rng(2).normal(size=(400, 33))
        a = AnomalyDetector(ForecasterSpec("AR", {"order": 2}), split=0.5).fit(x[:200])
        b = AnomalyDetector(ForecasterSpec("AR", {"order": 2, "batch_size": 7}), split=0.5).fit(x[:200])
        np.testing.assert_allclose(a.detect(x[200:]).residuals, b.detect(x[200:]).residuals, rtol=1e-12)


class TestDetector:
    def test_unfitted(self):
        with pytest.raises(RuntimeError):
            AnomalyDetector().detect(np.zeros((3, 33)))

    def test_deterministic(self):
        cfg, _ = ad_scenario(seed=3)
        tel = run(cfg)
        split = cfg.ad_train_orbits * cfg.orbit_period_s
        spec = ForecasterSpec("SeasonalNaive", {"period": cfg.orbit_period_s})
        r1 = AnomalyDetector(spec).fit(tel[:split]).detect(tel[split:])
        r2 = AnomalyDetector(spec).fit(tel[:split]).detect(tel[split:])
        assert r1.intervals == r2.intervals and r1.threshold == r2.threshold
        np.testing.assert_array_equal(r1.residuals, r2.residuals)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_fault_window_recall(self, seed):
        cfg, inj = ad_scenario(seed=seed)
        tel = run(cfg)
        split = cfg.ad_train_orbits * cfg.orbit_period_s
        det = AnomalyDetector(ForecasterSpec("SeasonalNaive", {"period": cfg.orbit_period_s})).fit(tel[:split])
        res = det.detect(tel[split:])
        truth = tel.anomalous[split:]
        assert np.count_nonzero(res.flags & truth) / np.count_nonzero(truth) >= 0.9

    def test_report_files(self):
        r = detect_scores(np.array([0.0, 0.2, 0.3, 0.0]), 0.1, np.arange(4) + 1729277003)
        d = r.to_dict()
        assert d["n_flagged"] == 2 and d["intervals"] == [["2024-10-18 18:43:24", "2024-10-18 18:43:25"]]
        assert r.residual_rows()[1] == ("2024-10-18 18:43:24", "0.2", 1)
        assert "Single-element lists are point anomalies." in r.render()
