"""Pictures, queries, event ground truth, and tag preprocessing."""

from __future__ import annotations

import hashlib
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
from nltk.stem.porter import PorterStemmer

from .stopwords import SMART_STOPWORDS

log = logging.getLogger(__name__)

_TOKEN = re.compile(r"[^\W_]+")
_stemmer = PorterStemmer(PorterStemmer.ORIGINAL_ALGORITHM)


class CorpusError(ValueError):
    """Input data violates a hard constraint (duplicate id, unknown picture...)."""


@lru_cache(maxsize=200_000)
def _stem(token: str) -> str:
    # Porter is not idempotent on every word ("agreed" -> "agre" -> "agr"),
    # so iterate to the fixed point.
    while True:
        stemmed = _stemmer.stem(token)
        if stemmed == token:
            return token
        token = stemmed


def preprocess(text: str) -> list[str]:
    """Tokenize, lowercase, drop stopwords, Porter-stem.

    Digits are kept inside tokens (``"London2012" -> ["london2012"]``).
    A stem that lands on a stopword is dropped as well, which keeps the
    function idempotent.
    """
    out = []
    for tok in _TOKEN.findall(text.lower()):
        if tok in SMART_STOPWORDS:
            continue
        stem = _stem(tok)
        if stem and stem not in SMART_STOPWORDS:
            out.append(stem)
    return out


def preprocess_tags(raw_tags: Iterable[str]) -> tuple[str, ...]:
    """Preprocess each raw tag and return the unique tokens in first-seen order."""
    seen = {}
    for raw in raw_tags:
        for tok in preprocess(raw):
            seen.setdefault(tok, None)
    return tuple(seen)


@dataclass(frozen=True)
class Picture:
    id: str
    lat: Optional[float] = None
    lon: Optional[float] = None
    ts: Optional[int] = None
    tags: tuple[str, ...] = ()

    def __post_init__(self):
        if (self.lat is None) != (self.lon is None):
            raise CorpusError(f"picture {self.id}: geotag needs both lat and lon")
        if self.lat is not None:
            if not -90.0 <= self.lat <= 90.0 or not -180.0 <= self.lon <= 180.0:
                raise CorpusError(f"picture {self.id}: geotag out of range")
        if len(set(self.tags)) != len(self.tags) or "" in self.tags:
            raise CorpusError(f"picture {self.id}: tags must be unique and non-empty")

    @property
    def geotagged(self) -> bool:
        return self.lat is not None


@dataclass(frozen=True)
class Query:
    id: str
    terms: tuple[str, ...]
    event: Optional[str] = None
    split: Optional[str] = None

    def __post_init__(self):
        if not self.terms:
            raise CorpusError(f"query {self.id}: no terms")
        if len(set(self.terms)) != len(self.terms):
            raise CorpusError(f"query {self.id}: duplicate terms")

    @property
    def event_id(self) -> str:
        return self.event if self.event is not None else self.id


class Corpus:
    """Immutable, id-addressable picture collection with tag statistics.

    Pictures are kept sorted by id, so integer positions order the same way
    as ids; every index built on top of the corpus uses those positions.
    """

    def __init__(self, pictures: Iterable[Picture], skipped: int = 0):
        pics = sorted(pictures, key=lambda p: p.id)
        self.pictures: tuple[Picture, ...] = tuple(pics)
        self.index_of = {p.id: i for i, p in enumerate(pics)}
        if len(self.index_of) != len(pics):
            dup = Counter(p.id for p in pics).most_common(1)[0][0]
            raise CorpusError(f"duplicate picture id {dup!r}")
        self.skipped = skipped

        postings: dict[str, list[int]] = {}
        for i, p in enumerate(pics):
            for t in p.tags:
                postings.setdefault(t, []).append(i)
        self._postings = {t: np.asarray(v, dtype=np.int64) for t, v in postings.items()}
        self.df = {t: len(v) for t, v in postings.items()}
        self.vocabulary = frozenset(postings)

        n = len(pics)
        self.lat = np.full(n, np.nan)
        self.lon = np.full(n, np.nan)
        self.ts = np.full(n, np.nan)
        for i, p in enumerate(pics):
            if p.geotagged:
                self.lat[i], self.lon[i] = p.lat, p.lon
            if p.ts is not None:
                self.ts[i] = p.ts
        self.total_tag_count = sum(len(p.tags) for p in pics)
        self._hash = None

    @property
    def N(self) -> int:
        return len(self.pictures)

    @property
    def W(self) -> int:
        return len(self.vocabulary)

    def __len__(self):
        return len(self.pictures)

    def __getitem__(self, pid: str) -> Picture:
        return self.pictures[self.index_of[pid]]

    def postings(self, tag: str) -> np.ndarray:
        """Sorted picture positions carrying ``tag`` (empty if unknown)."""
        return self._postings.get(tag, np.empty(0, dtype=np.int64))

    def union_postings(self, tags: Iterable[str]) -> np.ndarray:
        arrays = [self.postings(t) for t in tags]
        if not arrays:
            return np.empty(0, dtype=np.int64)
        return np.unique(np.concatenate(arrays))

    def time_range(self) -> Optional[tuple[int, int]]:
        valid = self.ts[~np.isnan(self.ts)]
        if valid.size == 0:
            return None
        return int(valid.min()), int(valid.max())

    def content_hash(self) -> str:
        if self._hash is None:
            h = hashlib.sha256()
            for p in self.pictures:
                h.update(json.dumps(_record(p), sort_keys=True).encode())
                h.update(b"\n")
            self._hash = h.hexdigest()
        return self._hash


def _record(p: Picture) -> dict:
    return {"id": p.id, "lat": p.lat, "lon": p.lon, "ts": p.ts, "tags": list(p.tags)}


def _read_jsonl(path):
    path = Path(path)
    try:
        with path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if line:
                    yield lineno, line
    except OSError as exc:
        raise CorpusError(f"cannot read {path}: {exc}") from exc


def picture_from_record(rec: dict) -> Picture:
    pid = rec["id"]
    if not isinstance(pid, str) or not pid:
        raise CorpusError("missing picture id")
    lat, lon, ts = rec.get("lat"), rec.get("lon"), rec.get("ts")
    tags = rec.get("tags") or []
    if not isinstance(tags, list):
        raise CorpusError(f"picture {pid}: tags must be a list")
    return Picture(
        id=pid,
        lat=None if lat is None else float(lat),
        lon=None if lon is None else float(lon),
        ts=None if ts is None else int(ts),
        tags=preprocess_tags(str(t) for t in tags),
    )


def parse_corpus(path) -> Corpus:
    """Read a line-delimited JSON picture file.

    Malformed records are skipped and counted in ``Corpus.skipped``;
    a duplicate picture id aborts with :class:`CorpusError`.
    """
    pictures = {}
    skipped = 0
    for lineno, line in _read_jsonl(path):
        try:
            rec = json.loads(line)
            pic = picture_from_record(rec)
        except (ValueError, KeyError, TypeError) as exc:
            log.warning("%s:%d: skipping record (%s)", path, lineno, exc)
            skipped += 1
            continue
        if pic.id in pictures:
            raise CorpusError(f"{path}:{lineno}: duplicate picture id {pic.id!r}")
        pictures[pic.id] = pic
    if skipped:
        log.info("skipped %d malformed records in %s", skipped, path)
    return Corpus(pictures.values(), skipped=skipped)


def write_corpus(corpus_or_pictures, path) -> None:
    pictures = getattr(corpus_or_pictures, "pictures", corpus_or_pictures)
    with open(path, "w", encoding="utf-8") as fh:
        for p in pictures:
            fh.write(json.dumps(_record(p)) + "\n")


@dataclass(frozen=True)
class EventGroundTruth:
    clusters: dict[str, frozenset[str]] = field(default_factory=dict)

    def __len__(self):
        return len(self.clusters)

    def relevant(self, event_id: str) -> frozenset[str]:
        return self.clusters.get(event_id, frozenset())

    def event_of(self) -> dict[str, str]:
        return {pid: ev for ev, pids in self.clusters.items() for pid in pids}


def parse_ground_truth(path, corpus: Corpus) -> EventGroundTruth:
    clusters: dict[str, frozenset[str]] = {}
    owner: dict[str, str] = {}
    for lineno, line in _read_jsonl(path):
        try:
            rec = json.loads(line)
            event, pids = str(rec["event"]), [str(p) for p in rec["pictures"]]
        except (ValueError, KeyError, TypeError) as exc:
            raise CorpusError(f"{path}:{lineno}: bad ground-truth record ({exc})") from exc
        if event in clusters:
            raise CorpusError(f"{path}:{lineno}: event {event!r} listed twice")
        for pid in pids:
            if pid not in corpus.index_of:
                raise CorpusError(f"{path}:{lineno}: unknown picture id {pid!r}")
            if owner.setdefault(pid, event) != event:
                raise CorpusError(
                    f"{path}:{lineno}: picture {pid!r} in events {owner[pid]!r} and {event!r}"
                )
        clusters[event] = frozenset(pids)
    return EventGroundTruth(clusters)


def write_ground_truth(gt: EventGroundTruth, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ev in sorted(gt.clusters):
            fh.write(json.dumps({"event": ev, "pictures": sorted(gt.clusters[ev])}) + "\n")


def parse_queries(path) -> list[Query]:
    """Read a query file; terms go through the same preprocessing as tags.

    Optional ``event`` (defaults to the query id) and ``split``
    (``train``/``test``) fields are accepted.
    """
    queries = []
    seen = set()
    for lineno, line in _read_jsonl(path):
        try:
            rec = json.loads(line)
            qid = str(rec["id"])
            terms = preprocess_tags(str(t) for t in rec["terms"])
            query = Query(qid, terms, rec.get("event"), rec.get("split"))
        except (ValueError, KeyError, TypeError) as exc:
            raise CorpusError(f"{path}:{lineno}: bad query record ({exc})") from exc
        if qid in seen:
            raise CorpusError(f"{path}:{lineno}: duplicate query id {qid!r}")
        seen.add(qid)
        queries.append(query)
    return queries


def write_queries(queries: Iterable[Query], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for q in queries:
            rec = {"id": q.id, "terms": list(q.terms)}
            if q.event is not None:
                rec["event"] = q.event
            if q.split is not None:
                rec["split"] = q.split
            fh.write(json.dumps(rec) + "\n")
