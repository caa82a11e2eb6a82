"""Seeded synthetic geotagged-picture corpus with planted events.

Each event sits at a venue inside one city tile: its pictures are Gaussian
children around the venue and carry the event name tag and event co-tags
(the terms expansion should pick up).  Most events last a few days; some run
for months, so their co-tags look flat in time.  Two kinds of confounding
tags ride along on event pictures and are also used on unrelated pictures:

* district tags, spread over a few km around the venue across the whole
  time span (flat in time, loosely clustered in space);
* burst tags, used all over the tile while the event runs (aligned in time,
  spread in space).

Confounders of one kind tend to be used together on unrelated pictures.

Per-event tagging rates and confounder volumes are drawn at random so that
document-frequency statistics alone do not give the tag kind away.

Everything else is uniform background with generic and Zipf-distributed
noise tags.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .corpus import EventGroundTruth, Picture, Query, write_corpus, write_ground_truth, write_queries
from .geo import KM_PER_DEGREE

DAY = 86400
EPOCH = 1_262_304_000  # 2010-01-01


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    tiles: int = 10
    events: int = 150
    pictures_min: int = 40
    pictures_max: int = 100
    cluster_radius_km: float = 0.15
    burst_days: float = 2.0
    long_event_rate: float = 0.5
    long_days_min: float = 60.0
    long_days_max: float = 180.0
    district_radius_km: float = 2.5
    span_days: int = 730
    background_pictures: int = 14000
    cotags: int = 4
    district_tags: int = 3
    burst_tags: int = 3
    generic_vocabulary: int = 12
    generic_per_picture: float = 0.5
    noise_vocabulary: int = 3000
    noise_per_picture_max: int = 1
    name_rate_min: float = 0.4
    name_rate_max: float = 0.8
    good_rate_min: float = 0.2
    good_rate_max: float = 0.5
    confounder_rate_min: float = 0.15
    confounder_rate_max: float = 0.45
    confounder_extra_min: float = 0.5
    confounder_extra_max: float = 1.5
    confounder_bundle: float = 0.6
    cotag_stray_rate: float = 0.1
    geotag_rate: float = 0.85
    train_queries: int = 100

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, (int, float)) and v < 0:
                raise ValueError(f"{f.name} must be non-negative")
        if self.cluster_radius_km <= 0:
            raise ValueError("cluster radius must be positive")
        for lo, hi in (("pictures_min", "pictures_max"), ("long_days_min", "long_days_max"),
                       ("name_rate_min", "name_rate_max"), ("good_rate_min", "good_rate_max"),
                       ("confounder_rate_min", "confounder_rate_max"),
                       ("confounder_extra_min", "confounder_extra_max")):
            if getattr(self, lo) > getattr(self, hi):
                raise ValueError(f"{lo} exceeds {hi}")
        if self.pictures_min > self.pictures_max:
            raise ValueError("pictures_min exceeds pictures_max")
        if self.tiles < 1 and (self.events or self.background_pictures):
            raise ValueError("need at least one tile")

    @classmethod
    def from_mapping(cls, values: dict) -> "SynthConfig":
        kinds = {f.name: f.type for f in fields(cls)}
        out = {}
        for k, v in values.items():
            if k not in kinds:
                raise ValueError(f"unknown synth option {k!r}")
            out[k] = float(v) if kinds[k] == "float" else int(v)
        return cls(**out)


@dataclass
class SynthCorpus:
    pictures: list[Picture]
    ground_truth: EventGroundTruth
    queries: list[Query]
    tiles: list[tuple[int, int]]  # (lat_floor, lon_floor)

    def write(self, directory) -> dict[str, Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        paths = {"corpus": d / "corpus.jsonl", "groundtruth": d / "groundtruth.jsonl",
                 "queries": d / "queries.jsonl"}
        write_corpus(self.pictures, paths["corpus"])
        write_ground_truth(self.ground_truth, paths["groundtruth"])
        write_queries(self.queries, paths["queries"])
        return paths


class _Builder:
    def __init__(self, cfg: SynthConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.records: list[tuple] = []  # (lat, lon, ts, tags, event or None)
        ranks = np.arange(1, cfg.noise_vocabulary + 1, dtype=float)
        self.noise_p = 1 / ranks / np.sum(1 / ranks) if cfg.noise_vocabulary else None

    def filler_tags(self) -> list[str]:
        rng, cfg = self.rng, self.cfg
        tags = []
        if cfg.generic_vocabulary:
            tags += [f"gen{j}" for j in rng.choice(cfg.generic_vocabulary, rng.poisson(cfg.generic_per_picture))]
        if cfg.noise_vocabulary:
            tags += [f"tag{j}" for j in rng.choice(cfg.noise_vocabulary, rng.integers(0, cfg.noise_per_picture_max + 1),
                                                              p=self.noise_p)]
        return tags

    def bundle(self, tag: str, group: list[str]) -> list[str]:
        """``tag`` plus each sibling of its group with the bundle rate."""
        return [tag] + [g for g in group if g != tag and self.rng.random() < self.cfg.confounder_bundle]

    def add(self, tile, x_km, y_km, ts, tags, event=None):
        lat_floor, lon_floor = tile
        scale = KM_PER_DEGREE * math.cos(math.radians(lat_floor + 0.5))
        lat = lat_floor + min(max(y_km / KM_PER_DEGREE, 0.0), 0.999999)
        lon = lon_floor + min(max(x_km / scale, 0.0), 0.999999)
        geo = self.rng.random() < self.cfg.geotag_rate
        self.records.append((round(lat, 7) if geo else None, round(lon, 7) if geo else None,
                             int(ts), tags, event))

    def window(self, tile):
        return KM_PER_DEGREE * math.cos(math.radians(tile[0] + 0.5)), KM_PER_DEGREE


def _pick_tiles(rng, n: int) -> list[tuple[int, int]]:
    seen = set()
    out = []
    while len(out) < n:
        t = (int(rng.integers(25, 55)), int(rng.integers(-120, 140)))
        if t not in seen:
            seen.add(t)
            out.append(t)
    return out


def generate(cfg: Optional[SynthConfig] = None) -> SynthCorpus:
    """Build the corpus, event ground truth and one query per event."""
    cfg = cfg or SynthConfig()
    rng = np.random.default_rng(cfg.seed)
    tiles = _pick_tiles(rng, cfg.tiles)
    b = _Builder(cfg, rng)
    span = cfg.span_days * DAY
    sigma = cfg.cluster_radius_km

    for eid in range(cfg.events):
        tile = tiles[int(rng.integers(len(tiles)))]
        w, h = b.window(tile)
        vx, vy = rng.uniform(0.1 * w, 0.9 * w), rng.uniform(0.1 * h, 0.9 * h)
        days = (rng.uniform(cfg.long_days_min, cfg.long_days_max)
                if rng.random() < cfg.long_event_rate else cfg.burst_days)
        duration = int(days * DAY)
        t0 = EPOCH + int(rng.integers(0, max(1, span - duration)))
        name = f"evt{eid}"
        cotags = [f"evt{eid}k{j}" for j in range(cfg.cotags)]
        districts = [f"dis{eid}k{j}" for j in range(cfg.district_tags)]
        bursts = [f"bur{eid}k{j}" for j in range(cfg.burst_tags)]
        n = int(rng.integers(cfg.pictures_min, cfg.pictures_max + 1))
        name_rate = rng.uniform(cfg.name_rate_min, cfg.name_rate_max)
        good_rates = rng.uniform(cfg.good_rate_min, cfg.good_rate_max, cfg.cotags)
        confounders = districts + bursts
        conf_rates = rng.uniform(cfg.confounder_rate_min, cfg.confounder_rate_max, len(confounders))
        for _ in range(n):
            tags = []
            if rng.random() < name_rate:
                tags.append(name)
            tags += [c for c, r in zip(cotags, good_rates) if rng.random() < r]
            tags += [c for c, r in zip(confounders, conf_rates) if rng.random() < r]
            x, y = rng.normal(vx, sigma), rng.normal(vy, sigma)
            b.add(tile, x, y, t0 + rng.uniform(0, duration), tags + b.filler_tags(), eid)
        extra = rng.uniform(cfg.confounder_extra_min, cfg.confounder_extra_max, len(confounders))
        for tag, r, x_rate in zip(districts, conf_rates, extra):
            for _ in range(int(round(x_rate * r * n))):
                x, y = rng.normal(vx, cfg.district_radius_km), rng.normal(vy, cfg.district_radius_km)
                b.add(tile, x, y, EPOCH + rng.uniform(0, span),
                      b.bundle(tag, districts) + b.filler_tags())
        for tag, r, x_rate in zip(bursts, conf_rates[len(districts):], extra[len(districts):]):
            for _ in range(int(round(x_rate * r * n))):
                b.add(tile, rng.uniform(0, w), rng.uniform(0, h),
                      t0 + rng.uniform(-DAY, duration + DAY), b.bundle(tag, bursts) + b.filler_tags())
        for c, r in zip(cotags, good_rates):
            for _ in range(rng.binomial(n, r * cfg.cotag_stray_rate)):
                st = tiles[int(rng.integers(len(tiles)))]
                sw, sh = b.window(st)
                b.add(st, rng.uniform(0, sw), rng.uniform(0, sh), EPOCH + rng.uniform(0, span),
                      [c] + b.filler_tags())

    for _ in range(cfg.background_pictures):
        tile = tiles[int(rng.integers(len(tiles)))]
        w, h = b.window(tile)
        b.add(tile, rng.uniform(0, w), rng.uniform(0, h), EPOCH + rng.uniform(0, span), b.filler_tags())

    order = rng.permutation(len(b.records))
    pictures = []
    members: dict[int, list[str]] = {}
    for k, idx in enumerate(order):
        lat, lon, ts, tags, event = b.records[idx]
        pid = f"p{k:06d}"
        tags = list(dict.fromkeys(tags))
        pictures.append(Picture(pid, lat, lon, ts, tuple(tags)))
        if event is not None:
            members.setdefault(event, []).append(pid)
    gt = EventGroundTruth({f"E{e}": frozenset(p) for e, p in sorted(members.items())})

    qorder = rng.permutation(cfg.events)
    n_train = min(cfg.train_queries, cfg.events)
    queries = []
    for rank, eid in enumerate(qorder):
        split = "train" if rank < n_train else "test"
        queries.append(Query(f"q{int(eid):03d}", (f"evt{int(eid)}",), f"E{int(eid)}", split))
    queries.sort(key=lambda q: q.id)
    return SynthCorpus(pictures, gt, queries, tiles)


def config_dict(cfg: SynthConfig) -> dict:
    return asdict(cfg)
