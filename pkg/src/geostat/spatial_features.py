"""Interval summaries (RDPA / RDMD) of normalized D-functions.

A D-profile is turned into ``z_k = D(h_k) / sqrt(Var D(h_k))``; its first and
second forward differences give the slope and concavity series.  Each series
is summarized by a signed sum (RDPA) and a maximum (RDMD) over four
contiguous sub-intervals and over the whole grid.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .pointpattern import (VAR_FLOOR, DegeneratePattern, DProfile, TagPointPattern,
                           cross_d_profile, d_profile, scale_grid)

N_SUBINTERVALS = 4
ORDERS = (0, 1, 2)
# pattern roles: candidate alone, candidate together with the query, and the
# cross pattern (candidate vs query)
ROLES = ("1", "2", "12")
STATS = ("RDMD", "RDPA")
COMPONENTS = tuple(f"s{i}" for i in range(1, N_SUBINTERVALS + 1)) + ("all",)


@dataclass(frozen=True)
class NormalizedDSeries:
    values: np.ndarray
    order: int = 0
    valid: bool = True

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if not self.valid:
            vals = np.zeros_like(vals)
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)

    @classmethod
    def invalid(cls, length: int, order: int = 0) -> "NormalizedDSeries":
        return cls(np.zeros(length), order, False)


def normalize(profile: DProfile) -> NormalizedDSeries:
    var = np.maximum(profile.var_d, VAR_FLOOR)
    return NormalizedDSeries(profile.d_hat / np.sqrt(var), 0, True)


def _check_interval(series: NormalizedDSeries, f: int, g: int):
    if not 1 <= f <= g <= len(series):
        raise ValueError(f"interval [{f}, {g}] outside 1..{len(series)}")


def g_sum(series: NormalizedDSeries, f: int, g: int) -> float:
    """Signed sum of z_f..z_g (1-based, inclusive); 0 for an invalid series."""
    _check_interval(series, f, g)
    if not series.valid:
        return 0.0
    return float(np.sum(series.values[f - 1:g]))


def g_max(series: NormalizedDSeries, f: int, g: int) -> float:
    _check_interval(series, f, g)
    if not series.valid:
        return 0.0
    return float(np.max(series.values[f - 1:g]))


def i_sum(series: NormalizedDSeries) -> float:
    return g_sum(series, 1, len(series))


def i_max(series: NormalizedDSeries) -> float:
    return g_max(series, 1, len(series))


def finite_difference(series: NormalizedDSeries) -> NormalizedDSeries:
    """Forward difference ``z[k+1] - z[k]``; positive where the curve rises."""
    n = len(series) - 1
    if n < 1:
        return NormalizedDSeries.invalid(0, series.order + 1)
    if not series.valid:
        return NormalizedDSeries.invalid(n, series.order + 1)
    return NormalizedDSeries(np.diff(series.values), series.order + 1, True)


def subintervals(length: int, parts: int = N_SUBINTERVALS) -> list[tuple[int, int]]:
    """Split 1..length into ``parts`` contiguous 1-based inclusive intervals,
    earlier parts taking the remainder."""
    if length < parts:
        raise ValueError(f"cannot split {length} points into {parts} intervals")
    bounds = np.cumsum([0] + [len(c) for c in np.array_split(np.arange(length), parts)])
    return [(int(bounds[i]) + 1, int(bounds[i + 1])) for i in range(parts)]


def summarize(series: NormalizedDSeries) -> dict[str, tuple[float, ...]]:
    """RDMD and RDPA values for components s1..s4 then the whole interval."""
    spans = subintervals(len(series)) + [(1, len(series))]
    return {
        "RDMD": tuple(g_max(series, f, g) for f, g in spans),
        "RDPA": tuple(g_sum(series, f, g) for f, g in spans),
    }


def series_orders(series: NormalizedDSeries) -> list[NormalizedDSeries]:
    first = finite_difference(series)
    return [series, first, finite_difference(first)]


def feature_names() -> list[str]:
    """Fixed column layout: stat x role x order x component, then flags."""
    names = [f"{stat}{role}_o{order}_{comp}"
             for stat in STATS for role in ROLES for order in ORDERS for comp in COMPONENTS]
    names += [f"{stat}{role}_valid" for stat in STATS for role in ROLES]
    return names


@dataclass
class SpatialFeatureVector:
    """Six families (RDMD/RDPA x three pattern roles), each at orders 0-2."""

    values: dict[str, float] = field(default_factory=dict)
    valid: dict[str, bool] = field(default_factory=dict)

    @classmethod
    def from_series(cls, by_role: dict[str, Optional[NormalizedDSeries]], grid_len: int):
        vec = cls()
        for role in ROLES:
            base = by_role.get(role)
            ok = base is not None and base.valid
            if not ok:
                base = NormalizedDSeries.invalid(grid_len)
            for order, s in enumerate(series_orders(base)):
                summary = summarize(s)
                for stat in STATS:
                    for comp, v in zip(COMPONENTS, summary[stat]):
                        vec.values[f"{stat}{role}_o{order}_{comp}"] = v
            for stat in STATS:
                vec.valid[f"{stat}{role}"] = ok
        return vec

    @classmethod
    def empty(cls, grid_len: int = 10):
        return cls.from_series({}, grid_len)

    def as_array(self) -> np.ndarray:
        out = [self.values[n] for n in feature_names() if not n.endswith("_valid")]
        out += [float(self.valid[n[:-6]]) for n in feature_names() if n.endswith("_valid")]
        return np.asarray(out, dtype=np.float64)

    def role_valid(self, role: str) -> bool:
        return self.valid[f"RDMD{role}"]


def stable_seed(base: int, *parts) -> list[int]:
    """Seed entropy derived from a base seed and string parts, stable across runs."""
    return [int(base), *(zlib.crc32(str(p).encode()) for p in parts)]


class SpatialProfiler:
    """Builds tag point patterns inside tiles and caches their D-profiles.

    Single-term profiles depend only on (tag, tile) and are shared across
    queries; query-dependent profiles are cached per query term set.
    """

    def __init__(self, corpus, tiles, grid=None, n_sims: int = 99, seed: int = 0,
                 cross_null: str = "labelling"):
        self.corpus = corpus
        self.tiles = tiles
        self.grid = scale_grid() if grid is None else np.asarray(grid, dtype=np.float64)
        self.n_sims = n_sims
        self.seed = seed
        self.cross_null = cross_null
        self._cache: dict = {}

    def pictures(self, tid: int, tags: Sequence[str], require: Sequence[str] = ()) -> np.ndarray:
        """Pictures in ``tid`` carrying any of ``tags`` (and, if given, any of ``require``)."""
        in_tile = self.tiles.tile_pictures.get(tid)
        if in_tile is None:
            return np.empty(0, dtype=np.int64)
        sel = np.intersect1d(in_tile, self.corpus.union_postings(tags), assume_unique=True)
        if require:
            sel = np.intersect1d(sel, self.corpus.union_postings(require), assume_unique=True)
        return sel

    def pattern(self, tid: int, pics: np.ndarray, label: str) -> TagPointPattern:
        from .geo import project, tile_window
        width, height = tile_window(tid)
        pts = project(self.corpus.lat[pics], self.corpus.lon[pics], tid).reshape(-1, 2)
        return TagPointPattern(label, pts, width, height)

    def _cached(self, key, build):
        if key not in self._cache:
            try:
                self._cache[key] = build()
            except DegeneratePattern:
                self._cache[key] = None
        return self._cache[key]

    def self_profile(self, tid: int, pics: np.ndarray, label: str) -> Optional[DProfile]:
        key = ("self", tid, label)
        return self._cached(key, lambda: d_profile(
            self.pattern(tid, pics, label), self.grid, self.n_sims,
            seed=stable_seed(self.seed, "self", tid, label)))

    def cross_profile(self, tid: int, pics_i, pics_j, label: str) -> Optional[DProfile]:
        key = ("cross", tid, label)
        return self._cached(key, lambda: cross_d_profile(
            self.pattern(tid, pics_i, label + "|i"), self.pattern(tid, pics_j, label + "|j"),
            self.grid, self.n_sims, seed=stable_seed(self.seed, "cross", tid, label),
            cross_null=self.cross_null))


def assemble_spatial_vector(e: str, query_terms: Sequence[str], tile: Optional[int],
                            profiler: SpatialProfiler) -> SpatialFeatureVector:
    """Spatial features of candidate ``e`` for a query, inside its best tile.

    Patterns: pictures tagged ``e``; pictures tagged ``e`` and at least one
    query term; and the cross pair (``e`` vs pictures with any query term).
    A missing tile or a degenerate pattern yields a zeroed, invalid family.
    """
    k = len(profiler.grid)
    if tile is None:
        return SpatialFeatureVector.empty(k)
    qkey = "+".join(sorted(query_terms))
    p_e = profiler.pictures(tile, [e])
    p_eq = profiler.pictures(tile, [e], require=query_terms)
    p_q = profiler.pictures(tile, query_terms)
    profiles = {
        "1": profiler.self_profile(tile, p_e, e),
        "2": profiler.self_profile(tile, p_eq, f"{e}&{qkey}"),
        "12": profiler.cross_profile(tile, p_e, p_q, f"{e}~{qkey}"),
    }
    series = {role: None if prof is None else normalize(prof) for role, prof in profiles.items()}
    return SpatialFeatureVector.from_series(series, k)
