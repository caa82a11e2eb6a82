"""1x1 degree world tiling, planar projection, and the tile inverted index."""

from __future__ import annotations

import gzip
import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .corpus import Corpus

KM_PER_DEGREE = 111.0
LAT_MIN, LAT_MAX = -70, 70
LON_MIN, LON_MAX = -180, 180
N_LON = LON_MAX - LON_MIN
N_TILES = N_LON * (LAT_MAX - LAT_MIN)  # 50,400
DEFAULT_MIN_TILE_PICTURES = 1000


def tile_id(lat_floor: int, lon_floor: int) -> int:
    return (lon_floor - LON_MIN) + N_LON * (lat_floor - LAT_MIN)


def tile_floors(tid: int) -> tuple[int, int]:
    """Inverse of :func:`tile_id`: ``(lat_floor, lon_floor)``."""
    if not 0 <= tid < N_TILES:
        raise ValueError(f"tile id {tid} outside [0, {N_TILES})")
    q, r = divmod(tid, N_LON)
    return q + LAT_MIN, r + LON_MIN


def assign_tile(lat: float, lon: float) -> Optional[int]:
    """Tile id for a geotag, or None for the polar bands outside [-70, 70)."""
    if not LAT_MIN <= lat < LAT_MAX:
        return None
    # lon == 180 is the same meridian as -180 but floor() would leave the grid
    lon_floor = min(math.floor(lon), LON_MAX - 1)
    return tile_id(math.floor(lat), lon_floor)


def tile_window(tid: int) -> tuple[float, float]:
    """(width, height) in km of the planar window for a tile."""
    lat_floor, _ = tile_floors(tid)
    return KM_PER_DEGREE * math.cos(math.radians(lat_floor + 0.5)), KM_PER_DEGREE


def project(lat, lon, tid: int) -> np.ndarray:
    """Equirectangular projection of geotags inside ``tid`` to km offsets.

    x is measured east of the tile's west edge (scaled by the cosine of the
    tile-centre latitude), y north of its south edge.
    """
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    lat_floor, lon_floor = tile_floors(tid)
    scale = KM_PER_DEGREE * math.cos(math.radians(lat_floor + 0.5))
    x = (lon - lon_floor) * scale
    y = (lat - lat_floor) * KM_PER_DEGREE
    return np.column_stack([x, y]) if x.ndim else np.array([x, y])


@dataclass(frozen=True)
class Tile:
    tile_id: int
    lat_floor: int
    lon_floor: int
    picture_count: int
    significant: bool


class TileIndex:
    """Tiles-as-documents inverted index over geotagged pictures.

    ``postings[tag]`` is a list of ``(tile_id, tf)`` sorted by tile id, where
    tf counts the pictures in the tile carrying the tag.  Untagged geotagged
    pictures still count toward a tile's population.
    """

    def __init__(self, tile_pictures: dict[int, np.ndarray], corpus: Corpus,
                 min_pictures: int = DEFAULT_MIN_TILE_PICTURES):
        self.min_pictures = min_pictures
        self.tile_pictures = {t: np.asarray(v, dtype=np.int64) for t, v in sorted(tile_pictures.items())}
        self.corpus_hash = corpus.content_hash()
        tile_tags: dict[int, Counter] = {}
        postings: dict[str, list[tuple[int, int]]] = {}
        for tid, pics in self.tile_pictures.items():
            c = Counter()
            for i in pics:
                c.update(corpus.pictures[i].tags)
            tile_tags[tid] = c
            for tag, tf in c.items():
                postings.setdefault(tag, []).append((tid, tf))
        self.tile_tags = tile_tags
        self.postings = postings
        self._tf = {(tag, tid): tf for tag, lst in postings.items() for tid, tf in lst}
        self._where = {int(i): t for t, pics in self.tile_pictures.items() for i in pics}

    @classmethod
    def build(cls, corpus: Corpus, min_pictures: int = DEFAULT_MIN_TILE_PICTURES) -> "TileIndex":
        groups: dict[int, list[int]] = {}
        for i in np.flatnonzero(~np.isnan(corpus.lat)):
            tid = assign_tile(corpus.lat[i], corpus.lon[i])
            if tid is not None:
                groups.setdefault(tid, []).append(int(i))
        return cls(groups, corpus, min_pictures)

    def __len__(self):
        return len(self.tile_pictures)

    def picture_count(self, tid: int) -> int:
        pics = self.tile_pictures.get(tid)
        return 0 if pics is None else len(pics)

    def is_significant(self, tid: int) -> bool:
        return self.picture_count(tid) > self.min_pictures

    def tile(self, tid: int) -> Tile:
        lat_floor, lon_floor = tile_floors(tid)
        return Tile(tid, lat_floor, lon_floor, self.picture_count(tid), self.is_significant(tid))

    def tiles(self) -> list[Tile]:
        return [self.tile(t) for t in self.tile_pictures]

    def tf(self, tag: str, tid: int) -> int:
        return self._tf.get((tag, tid), 0)

    def df(self, tag: str) -> int:
        return len(self.postings.get(tag, ()))

    def tile_of_pictures(self) -> dict[int, int]:
        return self._where

    # persistence -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "corpus_hash": self.corpus_hash,
            "min_pictures": self.min_pictures,
            "tiles": {str(t): v.tolist() for t, v in self.tile_pictures.items()},
        }

    def save(self, path) -> None:
        with gzip.open(path, "wt", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path, corpus: Corpus) -> "TileIndex":
        with gzip.open(path, "rt", encoding="utf-8") as fh:
            data = json.load(fh)
        if data.get("corpus_hash") != corpus.content_hash():
            raise ValueError(f"{path}: tile index was built for a different corpus")
        tiles = {int(t): np.asarray(v, dtype=np.int64) for t, v in data["tiles"].items()}
        return cls(tiles, corpus, data["min_pictures"])


def sidecar_path(directory, corpus: Corpus) -> Path:
    return Path(directory) / f"tiles-{corpus.content_hash()[:16]}.json.gz"


def select_best_tile(query_terms: Sequence[str], ranked_pictures: Iterable[int],
                     corpus: Corpus, tiles: TileIndex, k: int = 100) -> Optional[int]:
    """Pick the tile most representative of a query.

    Candidate tiles are the significant tiles holding any of the first ``k``
    geotagged pictures of ``ranked_pictures`` (corpus positions).  Each is
    scored as a document: sum over query terms of ``tf * log(T / df)``.
    Ties go to the lowest tile id; None when no candidate exists.
    """
    where = tiles.tile_of_pictures()
    candidates = set()
    seen = 0
    for i in ranked_pictures:
        tid = where.get(int(i))
        if tid is None:
            continue
        seen += 1
        if tiles.is_significant(tid):
            candidates.add(tid)
        if seen >= k:
            break
    if not candidates:
        return None
    total = len(tiles)
    best, best_score = None, -math.inf
    for tid in sorted(candidates):
        score = 0.0
        for q in query_terms:
            tf = tiles.tf(q, tid)
            if tf:
                score += tf * math.log(total / tiles.df(q))
        if score > best_score:
            best, best_score = tid, score
    return best
