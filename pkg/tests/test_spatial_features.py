import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from geostat.corpus import Corpus
from geostat.geo import TileIndex
from geostat.pointpattern import DProfile, TagPointPattern, d_profile, scale_grid
from geostat.spatial_features import (COMPONENTS, ORDERS, ROLES, STATS, NormalizedDSeries, SpatialFeatureVector,
                                      SpatialProfiler, assemble_spatial_vector, feature_names, finite_difference,
                                      g_max, g_sum, i_max, i_sum, normalize, subintervals, summarize)

series_values = hnp.arrays(np.float64, st.integers(4, 20), elements=st.floats(-50, 50, allow_nan=False))


def s(values, valid=True):
    return NormalizedDSeries(np.asarray(values, float), 0, valid)


class TestSummaries:
    def test_sum_whole(self):
        assert g_sum(s([1, 2, 3, -1]), 1, 4) == 5

    def test_sum_part(self):
        assert g_sum(s([1, 2, 3, -1]), 3, 4) == 2

    def test_max_whole(self):
        assert g_max(s([1, 2, 3, -1]), 1, 4) == 3

    def test_invalid_is_zero(self):
        bad = s([1, 2, 3, -1], valid=False)
        assert g_sum(bad, 1, 4) == 0 and g_max(bad, 1, 4) == 0

    def test_interval_checked(self):
        with pytest.raises(ValueError):
            g_sum(s([1, 2]), 2, 3)
        with pytest.raises(ValueError):
            g_max(s([1, 2]), 2, 1)

    @given(series_values, st.data())
    def test_sum_additive(self, vals, data):
        n = len(vals)
        m = data.draw(st.integers(1, n - 1))
        ser = s(vals)
        assert g_sum(ser, 1, n) == pytest.approx(g_sum(ser, 1, m) + g_sum(ser, m + 1, n), abs=1e-9)

    @given(series_values)
    def test_max_over_union(self, vals):
        ser = s(vals)
        spans = subintervals(len(vals))
        assert i_max(ser) == max(g_max(ser, f, g) for f, g in spans)

    @given(series_values)
    def test_max_bounds_mean(self, vals):
        ser = s(vals)
        assert i_max(ser) >= i_sum(ser) / len(ser) - 1e-9


class TestFiniteDifference:
    def test_example(self):
        d = finite_difference(s([0, 1, 3]))
        assert d.values.tolist() == [1, 2] and d.order == 1

    def test_positive_where_rising(self):
        assert np.all(finite_difference(s([0, 1, 2, 5])).values > 0)

    def test_invalid_propagates(self):
        d = finite_difference(s([0, 1, 3], valid=False))
        assert not d.valid and len(d) == 2


class TestSubintervals:
    def test_ten_points(self):
        assert subintervals(10) == [(1, 3), (4, 6), (7, 8), (9, 10)]

    @given(st.integers(4, 200))
    def test_partition(self, n):
        spans = subintervals(n)
        assert spans[0][0] == 1 and spans[-1][1] == n
        assert all(b[0] == a[1] + 1 for a, b in zip(spans, spans[1:]))

    def test_too_short(self):
        with pytest.raises(ValueError):
            subintervals(3)

    def test_summarize_order(self):
        out = summarize(s(np.arange(10.0)))
        assert out["RDPA"] == (3.0, 12.0, 13.0, 17.0, 45.0)
        assert out["RDMD"] == (2.0, 5.0, 7.0, 9.0, 9.0)


class TestNormalize:
    def test_divides_by_sd(self):
        grid = scale_grid()
        z = np.zeros(10)
        prof = DProfile(grid, z, z, np.full(10, 2.0), np.full(10, 4.0), z, z, "self", 99)
        assert normalize(prof).values.tolist() == [1.0] * 10

    def test_variance_floor(self):
        grid = scale_grid()
        z = np.zeros(10)
        prof = DProfile(grid, z, z, np.full(10, 1e-6), z, z, z, "self", 99)
        assert np.all(np.isfinite(normalize(prof).values))


class TestVector:
    def test_layout(self):
        names = feature_names()
        assert len(names) == len(STATS) * len(ROLES) * len(ORDERS) * len(COMPONENTS) + 6 == 96
        assert "RDMD12_o1_s3" in names and len(set(names)) == len(names)
        assert names[0] == "RDMD1_o0_s1" and names[-1] == "RDPA12_valid"

    def test_empty_is_zero_and_invalid(self):
        vec = SpatialFeatureVector.empty()
        assert np.all(vec.as_array() == 0)
        assert not any(vec.role_valid(r) for r in ROLES)

    def test_one_valid_role(self):
        vec = SpatialFeatureVector.from_series({"2": s(np.arange(10.0))}, 10)
        arr = dict(zip(feature_names(), vec.as_array()))
        assert arr["RDPA2_o0_all"] == 45.0 and arr["RDPA2_o1_all"] == 9.0 and arr["RDPA2_o2_all"] == 0.0
        assert arr["RDPA2_valid"] == 1.0 and arr["RDPA1_valid"] == 0.0
        assert vec.role_valid("2") and not vec.role_valid("12")


def _profile_features(points, seed=0):
    prof = d_profile(TagPointPattern("a", points, 1.0, 1.0), scale_grid(), 19, seed=seed)
    return SpatialFeatureVector.from_series({"1": normalize(prof)}, 10).as_array()


class TestTranslation:
    def test_rigid_translation(self, rng):
        pts = rng.uniform(0, 0.5, (60, 2))
        assert np.array_equal(_profile_features(pts), _profile_features(pts + [0.25, 0.125]))


class TestAssemble:
    def test_no_tile(self, small_synth):
        c = Corpus(small_synth.pictures)
        prof = SpatialProfiler(c, TileIndex.build(c), n_sims=5)
        vec = assemble_spatial_vector("x", ["y"], None, prof)
        assert np.all(vec.as_array() == 0)

    def test_deterministic_and_cached(self, small_synth):
        c = Corpus(small_synth.pictures)
        tiles = TileIndex.build(c)
        q = small_synth.queries[0]
        tid = max(tiles.tile_pictures, key=lambda t: len(tiles.tile_pictures[t]))
        e = sorted(c.vocabulary)[0]
        a = assemble_spatial_vector(e, q.terms, tid, SpatialProfiler(c, tiles, n_sims=9, seed=4))
        prof = SpatialProfiler(c, tiles, n_sims=9, seed=4)
        b = assemble_spatial_vector(e, q.terms, tid, prof)
        n_cached = len(prof._cache)
        assemble_spatial_vector(e, q.terms, tid, prof)
        assert np.array_equal(a.as_array(), b.as_array()) and len(prof._cache) == n_cached
