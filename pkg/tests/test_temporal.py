import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from geostat.temporal import (DF3_FLOOR, WEEK, UndefinedStatistic, autocorrelation, build_time_series,
                              cooccurrence, cross_correlation_max, df_features, kurtosis, temporal_features,
                              term_feature_names, term_features)

from conftest import make_corpus

nonconst = hnp.arrays(np.float64, st.integers(3, 30), elements=st.integers(0, 50).map(float)) \
    .filter(lambda x: np.ptp(x) > 0)


class TestTimeSeries:
    def test_same_week(self):
        c = make_corpus([("a", None, None, 0, ["x"]), ("b", None, None, 100, ["x"]),
                         ("c", None, None, 200, ["x"]), ("d", None, None, 3 * WEEK, ["y"])])
        ts = build_time_series(c, c.postings("x"))
        assert ts.counts.tolist() == [3, 0, 0, 0] and ts.total == 3

    def test_no_timestamps(self):
        c = make_corpus([("a", None, None, None, ["x"]), ("b", None, None, 5, ["y"])])
        assert build_time_series(c, c.postings("x")) is None

    def test_bad_width(self):
        c = make_corpus([("a", None, None, 0, ["x"])])
        with pytest.raises(ValueError):
            build_time_series(c, [0], 0)


class TestKurtosis:
    def test_spike(self):
        assert kurtosis([0, 0, 10, 0, 0]) == pytest.approx(3.25)

    def test_short(self):
        assert kurtosis([0, 1, 0]) == pytest.approx(1.5)

    def test_constant(self):
        with pytest.raises(UndefinedStatistic):
            kurtosis([2, 2, 2])

    @given(nonconst, st.integers(0, 100), st.integers(1, 8))
    def test_shift_and_scale_invariant(self, x, c, a):
        assert kurtosis(x * a + c) == pytest.approx(kurtosis(x), rel=1e-9)


class TestAutocorrelation:
    def test_alternating(self):
        assert autocorrelation([1, -1, 1, -1]) == pytest.approx(-0.75)

    def test_ramp(self):
        assert autocorrelation([1, 2, 3, 4]) == pytest.approx(0.25)

    def test_constant(self):
        with pytest.raises(UndefinedStatistic):
            autocorrelation([3, 3])

    @given(nonconst, st.integers(0, 100))
    def test_shift_invariant(self, x, c):
        assert autocorrelation(x + c) == pytest.approx(autocorrelation(x), abs=1e-9)


class TestCrossCorrelation:
    def test_identical(self):
        assert cross_correlation_max([1, 5, 2, 0, 3], [1, 5, 2, 0, 3]) == pytest.approx(1.0)

    def test_shifted_impulse(self):
        a = np.zeros(12)
        a[3] = 1
        assert cross_correlation_max(a, np.roll(a, 2), 2) == pytest.approx(1.0)

    def test_undefined(self):
        with pytest.raises(UndefinedStatistic):
            cross_correlation_max([1, 1, 1, 1], [0, 1, 0, 1])

    def test_misaligned(self):
        with pytest.raises(ValueError):
            cross_correlation_max([1, 2, 3], [1, 2])

    def test_white_noise(self):
        low = 0
        for seed in range(50):
            r = np.random.default_rng(seed)
            low += cross_correlation_max(r.normal(size=200), r.normal(size=200)) < 0.3
        assert low >= 45

    @given(nonconst, st.data())
    def test_bounded_and_symmetric(self, x, data):
        y = data.draw(hnp.arrays(np.float64, len(x), elements=st.integers(0, 50).map(float)))
        try:
            r = cross_correlation_max(x, y)
        except UndefinedStatistic:
            return
        assert -1 <= r <= 1
        assert r == pytest.approx(cross_correlation_max(y, x), abs=1e-12)


class TestTermStatistics:
    def test_df_example(self):
        df0, df1, df2, df3, ok = df_features(10, 100)
        assert ok and df0 == 10
        assert (df1, df2, df3) == pytest.approx((2.302585, 2.397895, 2.197225), abs=1e-6)

    def test_df_zero(self):
        assert df_features(0, 100) == (0.0, 0.0, 0.0, 0.0, False)

    def test_df3_floor(self):
        assert df_features(100, 100)[3] == DF3_FLOOR == math.log(1e-9)

    @given(st.integers(1, 10_000), st.data())
    def test_df2_above_df1(self, n, data):
        df0 = data.draw(st.integers(1, n))
        _, df1, df2, _, _ = df_features(df0, n)
        assert df2 > df1

    def test_cooccurrence(self):
        single, pair = cooccurrence({1, 2, 3}, [{1, 2}, {2, 9}])
        assert single == pytest.approx(math.log1p(3 / 2))
        assert pair == pytest.approx(math.log1p(1 / 2))
        assert cooccurrence({1}, [{5}]) == (0.0, 0.0)

    def test_term_features_scopes(self):
        c = make_corpus([("a", None, None, 0, ["e", "q"]), ("b", None, None, 0, ["e"]),
                         ("c", None, None, 0, ["q"]), ("d", None, None, 0, ["e", "q"])])
        vec = term_features("e", ["q"], [0, 2], c)
        assert vec.values["DF0_Whole"] == 3 and vec.values["DF0_Feedback"] == 1
        assert vec.values["CoOccSingle_Whole"] == pytest.approx(math.log1p(2))
        assert vec.values["DF0_Feedback"] <= vec.values["DF0_Whole"]
        assert len(vec.as_array()) == len(term_feature_names())

    def test_empty_feedback(self):
        c = make_corpus([("a", None, None, 0, ["e"])])
        with pytest.raises(ValueError):
            term_features("e", ["q"], [], c)


class TestTemporalVector:
    def test_undefined_zeroed_with_flag(self):
        c = make_corpus([("a", None, None, 0, ["e", "q"]), ("b", None, None, WEEK, ["e"])])
        vec = temporal_features("e", ["q"], c)
        assert not vec.valid["KURT1"] and vec.values["KURT1"] == 0.0

    def test_burst(self):
        recs = [(f"p{i}", None, None, 5 * WEEK + i, ["e", "q"]) for i in range(5)]
        recs += [(f"b{i}", None, None, i * WEEK, ["z"]) for i in range(12)]
        vec = temporal_features("e", ["q"], make_corpus(recs))
        assert vec.valid["KURT1"] and vec.values["KURT1"] > 5
        assert vec.values["CC"] == pytest.approx(1.0)
