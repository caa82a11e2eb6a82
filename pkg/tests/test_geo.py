import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geostat.geo import (N_TILES, TileIndex, assign_tile, project, select_best_tile, sidecar_path, tile_floors,
                         tile_id, tile_window)

from conftest import make_corpus


class TestAssignTile:
    def test_london(self):
        assert assign_tile(51.5, -0.1) == 179 + 360 * 121 == 43739

    def test_polar_out_of_band(self):
        assert assign_tile(75.0, 10.0) is None
        assert assign_tile(70.0, 10.0) is None
        assert assign_tile(-70.5, 10.0) is None

    def test_lower_corner(self):
        assert assign_tile(-70.0, -180.0) == 0

    def test_antimeridian_east_edge(self):
        assert assign_tile(10.0, 180.0) == tile_id(10, 179)

    def test_total(self):
        assert N_TILES == 50400

    @given(st.integers(-70, 69), st.integers(-180, 179))
    def test_round_trip(self, lat_floor, lon_floor):
        tid = tile_id(lat_floor, lon_floor)
        assert 0 <= tid < N_TILES
        assert tile_floors(tid) == (lat_floor, lon_floor)

    def test_floors_reject_out_of_range(self):
        with pytest.raises(ValueError):
            tile_floors(N_TILES)


class TestProject:
    def test_latitude_span(self):
        tid = tile_id(10, 20)
        assert project(11.0, 20.0, tid)[1] == pytest.approx(111.0)

    def test_longitude_span_at_60(self):
        # tile whose centre latitude is 60 degrees
        tid = tile_id(59, 0)
        x = project(59.5, 1.0, tid)[0]
        assert x == pytest.approx(111.0 * math.cos(math.radians(59.5)))
        assert 111.0 * math.cos(math.radians(60.0)) == pytest.approx(55.5)

    def test_corner_is_origin(self):
        tid = tile_id(-3, 7)
        assert project(-3.0, 7.0, tid).tolist() == [0.0, 0.0]

    @settings(max_examples=200)
    @given(st.floats(-70, 69.999999), st.floats(-180, 179.999999))
    def test_projection_inside_tile(self, lat, lon):
        tid = assign_tile(lat, lon)
        x, y = project(lat, lon, tid)
        w, h = tile_window(tid)
        assert 0 <= x <= w + 1e-9 and 0 <= y <= h + 1e-9


def _tile_corpus():
    recs = [("a", 10.2, 20.2, 0, ["concert"]), ("b", 10.7, 20.9, 0, ["concert", "rock"]),
            ("c", 11.5, 20.5, 0, ["rock"]), ("d", None, None, 0, ["concert"]),
            ("e", 11.6, 20.1, 0, [])]
    return make_corpus(recs)


class TestTileIndex:
    def test_empty(self):
        idx = TileIndex.build(make_corpus([("a", None, None, None, ["x"])]))
        assert len(idx) == 0 and idx.postings == {}

    def test_hand_count(self):
        idx = TileIndex.build(_tile_corpus(), min_pictures=1)
        t1, t2 = tile_id(10, 20), tile_id(11, 20)
        assert idx.postings["concert"] == [(t1, 2)]
        assert idx.postings["rock"] == [(t1, 1), (t2, 1)]
        assert idx.picture_count(t2) == 2  # the untagged picture counts
        assert idx.tf("concert", t2) == 0 and idx.df("rock") == 2

    def test_posting_totals(self):
        c = _tile_corpus()
        idx = TileIndex.build(c)
        pairs = sum(len(p.tags) for p in c.pictures if p.geotagged)
        assert sum(tf for lst in idx.postings.values() for _, tf in lst) == pairs

    def test_significance_threshold(self):
        recs = [(f"p{i}", 40.5, 10.5, 0, ["x"]) for i in range(1001)]
        idx = TileIndex.build(make_corpus(recs))
        assert idx.is_significant(tile_id(40, 10))
        idx = TileIndex.build(make_corpus(recs[:1000]))
        assert not idx.is_significant(tile_id(40, 10))

    def test_postings_sorted(self, small_synth):
        from geostat.corpus import Corpus
        idx = TileIndex.build(Corpus(small_synth.pictures))
        for lst in idx.postings.values():
            ids = [t for t, _ in lst]
            assert ids == sorted(ids) and all(tf >= 1 for _, tf in lst)

    def test_save_load(self, tmp_path):
        c = _tile_corpus()
        idx = TileIndex.build(c, 1)
        path = sidecar_path(tmp_path, c)
        idx.save(path)
        back = TileIndex.load(path, c)
        assert back.postings == idx.postings and back.min_pictures == 1

    def test_load_wrong_corpus(self, tmp_path):
        c = _tile_corpus()
        TileIndex.build(c).save(tmp_path / "t.json.gz")
        with pytest.raises(ValueError):
            TileIndex.load(tmp_path / "t.json.gz", make_corpus([("z", 1.0, 1.0, 0, ["x"])]))


class TestBestTile:
    def _corpus(self, n_a, n_b):
        recs = [(f"a{i}", 10.5, 20.5, 0, ["jazz"]) for i in range(n_a)]
        recs += [(f"b{i}", 30.5, 40.5, 0, ["jazz"]) for i in range(n_b)]
        return make_corpus(recs)

    def test_single_candidate(self):
        c = self._corpus(3, 0)
        idx = TileIndex.build(c, 0)
        assert select_best_tile(["jazz"], range(c.N), c, idx) == tile_id(10, 20)

    def test_higher_tf_wins(self):
        c = self._corpus(2, 4)
        # equal df (the term occurs in both tiles), tf 2 vs 4; a third tile keeps log(T/df) > 0
        extra = make_corpus([(p.id, p.lat, p.lon, p.ts, list(p.tags)) for p in c.pictures]
                            + [("z", 50.5, 5.5, 0, ["other"])])
        idx = TileIndex.build(extra, 0)
        assert select_best_tile(["jazz"], range(extra.N), extra, idx) == tile_id(30, 40)

    def test_no_geotagged_in_top_k(self):
        c = make_corpus([("a", None, None, 0, ["jazz"]), ("b", 10.5, 20.5, 0, ["jazz"])])
        idx = TileIndex.build(c, 0)
        assert select_best_tile(["jazz"], [0], c, idx, k=1) is None

    def test_tie_goes_to_lowest_id(self):
        c = make_corpus([("a", 10.5, 20.5, 0, ["jazz"]), ("b", 30.5, 40.5, 0, ["jazz"]),
                         ("c", 50.5, 5.5, 0, ["x"])])
        idx = TileIndex.build(c, 0)
        assert select_best_tile(["jazz"], [1, 0], c, idx) == min(tile_id(10, 20), tile_id(30, 40))

    def test_only_significant_tiles(self):
        c = self._corpus(3, 0)
        idx = TileIndex.build(c, 1000)
        assert select_best_tile(["jazz"], range(c.N), c, idx) is None
