"""Pseudo-relevance-feedback query expansion with classifier-gated term
selection, plus the geo-temporal (ZKYC) relatedness baseline."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .geo import assign_tile, select_best_tile
from .retrieval import Bm25Params, DEFAULT_CUTOFF, RankedList, search

KL_EPS = 1e-12
CONF_THRESHOLD = 0.5
MODES = ("kl", "kl_t", "kl_st", "kl_zkyc")
FBDOCS_GRID = (20, 40, 60, 80, 100, 120)
FBTERMS_GRID = (15, 25, 35, 45, 55)
THETA_SWEEP = (0.001, 0.005, 0.01, 0.05, 0.1, 0.5)
GOOD, BAD = "good", "bad"


@dataclass(frozen=True)
class ExpansionConfig:
    fbdocs: int = 20
    fbterms: int = 15
    beta: float = 0.4
    alpha: float = 0.5
    theta: float = 0.005
    mode: str = "kl_st"

    def __post_init__(self):
        if self.fbdocs < 0 or self.fbterms < 0:
            raise ValueError("fbdocs and fbterms must be non-negative")
        if not (0 <= self.alpha <= 1 and 0 <= self.beta <= 1):
            raise ValueError("alpha and beta must lie in [0, 1]")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")


def extract_candidates(feedback_positions, corpus, query_terms: Sequence[str]) -> list[str]:
    """Distinct tags of the feedback pictures minus the query terms, sorted."""
    q = set(query_terms)
    tags = {t for i in feedback_positions for t in corpus.pictures[int(i)].tags}
    return sorted(tags - q)


def kl_score(p_rel: float, p_coll: float) -> float:
    return p_rel * math.log(p_rel / max(p_coll, KL_EPS)) if p_rel > 0 else 0.0


def kl_scores(candidates: Sequence[str], feedback_positions, corpus) -> dict[str, float]:
    """KL score of each candidate: feedback term distribution vs collection."""
    fb = Counter(t for i in feedback_positions for t in corpus.pictures[int(i)].tags)
    fb_total = sum(fb.values())
    coll_total = corpus.total_tag_count
    return {e: kl_score(fb[e] / fb_total, corpus.df.get(e, 0) / coll_total) for e in candidates}


def normalize_by_max(values: Mapping[str, float]) -> dict[str, float]:
    """Divide by the maximum after clipping negatives to 0; all-zero stays zero."""
    clipped = {k: max(v, 0.0) for k, v in values.items()}
    top = max(clipped.values(), default=0.0)
    if top <= 0:
        return {k: 0.0 for k in clipped}
    return {k: v / top for k, v in clipped.items()}


class SkipCandidate(ValueError):
    """AP of the unexpanded query is zero, so AP_diff is undefined."""


def ap_diff(ap_q: float, ap_qe: float) -> float:
    if ap_q <= 0:
        raise SkipCandidate("AP(Q) = 0")
    return (ap_qe - ap_q) / ap_q


def label(diff: float, theta: float = 0.005) -> str:
    """good iff diff > theta; equality counts as bad."""
    return GOOD if diff > theta else BAD


def combine_conf(conf_t: float, conf_st: Optional[float] = None) -> float:
    """Blend the two classifier confidences; 0.5 counts as above threshold.

    Without a spatio-temporal confidence the temporal one is used as is.
    """
    if conf_st is None:
        return conf_t
    above_t = conf_t >= CONF_THRESHOLD
    above_st = conf_st >= CONF_THRESHOLD
    if above_t and above_st:
        return (conf_t + conf_st) / 2
    if above_t:
        return conf_t
    if above_st:
        return conf_st
    return 0.0


def kl_final(kl_norm: float, conf_norm: float, alpha: float = 0.5) -> float:
    return alpha * kl_norm + (1 - alpha) * conf_norm


def rocchio_reweight(query_terms: Sequence[str], weights: Mapping[str, float],
                     beta: float = 0.4) -> dict[str, float]:
    """``tf_q(t) / max tf_q + beta * w(t) / max w`` over query and expansion terms."""
    tfq = Counter(query_terms)
    if not tfq:
        raise ValueError("empty query")
    max_tf = max(tfq.values())
    max_w = max(weights.values(), default=0.0)
    out = {t: c / max_tf for t, c in tfq.items()}
    if max_w <= 0:
        return out
    for t, w in weights.items():
        out[t] = out.get(t, 0.0) + beta * w / max_w
    return out


# ZKYC geo-temporal relatedness ---------------------------------------------------

ZKYC_BIN = 14 * 86400
SQRT2 = math.sqrt(2.0)


class ZkycIndex:
    """Per-tag l2-normalized counts over (1-degree tile, 2-week bin) cells.

    Counts are pictures, standing in for distinct users.
    """

    def __init__(self, corpus, bin_width: int = ZKYC_BIN):
        self.bin_width = bin_width
        span = corpus.time_range()
        cells: dict[str, Counter] = {}
        if span is not None:
            origin = span[0]
            for i, p in enumerate(corpus.pictures):
                if not p.geotagged or p.ts is None:
                    continue
                tid = assign_tile(p.lat, p.lon)
                if tid is None:
                    continue
                cell = (tid, (p.ts - origin) // bin_width)
                for t in p.tags:
                    cells.setdefault(t, Counter())[cell] += 1
        self.vectors = {}
        for t, c in cells.items():
            norm = math.sqrt(sum(v * v for v in c.values()))
            self.vectors[t] = {k: v / norm for k, v in c.items()}

    def distance(self, a: str, b: str) -> tuple[float, bool]:
        """Euclidean distance of the normalized vectors, and a validity flag.

        A tag without geo-temporal occurrences is at the maximum distance sqrt(2).
        """
        va, vb = self.vectors.get(a), self.vectors.get(b)
        if va is None or vb is None:
            return SQRT2, False
        if len(vb) < len(va):
            va, vb = vb, va
        dot = sum(v * vb.get(k, 0.0) for k, v in va.items())
        return math.sqrt(max(0.0, 2.0 - 2.0 * dot)), True

    def relatedness(self, e: str, query_terms: Sequence[str]) -> float:
        """Highest ``1 - d / sqrt(2)`` between ``e`` and any query term."""
        return max((1.0 - self.distance(e, q)[0] / SQRT2 for q in query_terms), default=0.0)


def zkyc_relatedness(tag_a: str, tag_b: str, corpus=None, index: Optional[ZkycIndex] = None):
    if index is None:
        index = ZkycIndex(corpus)
    return index.distance(tag_a, tag_b)


# full expansion ---------------------------------------------------------------------

@dataclass
class CandidateTerm:
    term: str
    kl: float
    kl_norm: float = 0.0
    conf: float = 0.0
    kl_final: float = 0.0
    conf_t: Optional[float] = None
    conf_st: Optional[float] = None
    features: object = None


@dataclass
class ExpansionResult:
    ranked: RankedList
    initial: RankedList
    candidates: list[CandidateTerm] = field(default_factory=list)
    selected: list[str] = field(default_factory=list)
    query_weights: dict = field(default_factory=dict)
    tile: Optional[int] = None


class Expander:
    """Runs the expansion procedure for queries against fixed indices.

    ``forest_t`` / ``forest_st`` expose ``confidence(matrix) -> array`` of
    probabilities of the good class; either may be absent, in which case its
    confidence is 0.
    """

    def __init__(self, corpus, index, tiles=None, extractor=None, forest_t=None, forest_st=None,
                 zkyc: Optional[ZkycIndex] = None, params: Bm25Params = Bm25Params(),
                 cutoff: int = DEFAULT_CUTOFF, best_tile_k: int = 100):
        self.corpus = corpus
        self.index = index
        self.tiles = tiles
        self.extractor = extractor
        self.forest_t = forest_t
        self.forest_st = forest_st
        self.zkyc = zkyc
        self.params = params
        self.cutoff = cutoff
        self.best_tile_k = best_tile_k

    def initial_run(self, query_terms: Sequence[str]) -> RankedList:
        return search(self.index, list(query_terms), self.params, self.cutoff)

    def best_tile(self, query_terms, initial: RankedList) -> Optional[int]:
        if self.tiles is None:
            return None
        return select_best_tile(query_terms, initial.positions, self.corpus, self.tiles,
                                self.best_tile_k)

    def score_candidates(self, query_terms: Sequence[str], feedback, config: ExpansionConfig,
                         tile: Optional[int]) -> list[CandidateTerm]:
        names = extract_candidates(feedback, self.corpus, query_terms)
        if not names:
            return []
        kl = kl_scores(names, feedback, self.corpus)
        kl_n = normalize_by_max(kl)
        cands = [CandidateTerm(e, kl[e], kl_n[e]) for e in names]
        mode = config.mode
        if mode == "kl":
            for c in cands:
                c.kl_final = c.kl_norm
            return cands
        if mode == "kl_zkyc":
            zk = self.zkyc if self.zkyc is not None else ZkycIndex(self.corpus)
            rel = normalize_by_max({c.term: zk.relatedness(c.term, query_terms) for c in cands})
            for c in cands:
                c.conf = rel[c.term]
        else:
            self._classify(cands, query_terms, feedback, tile, spatial=(mode == "kl_st"))
            conf_n = normalize_by_max({c.term: c.conf for c in cands})
            for c in cands:
                c.conf = conf_n[c.term]
        for c in cands:
            c.kl_final = kl_final(c.kl_norm, c.conf, config.alpha)
        return cands

    def _classify(self, cands, query_terms, feedback, tile, spatial: bool):
        feats = [self.extractor.extract(c.term, query_terms, feedback, tile, spatial=spatial)
                 for c in cands]
        conf_t = (self.forest_t.confidence(np.vstack([f.t_vector() for f in feats]))
                  if self.forest_t is not None else np.zeros(len(cands)))
        st_rows = [i for i, f in enumerate(feats) if spatial and f.spatial_available]
        conf_st = {}
        if st_rows and self.forest_st is not None:
            vals = self.forest_st.confidence(np.vstack([feats[i].st_vector() for i in st_rows]))
            conf_st = dict(zip(st_rows, vals.tolist()))
        elif st_rows:
            conf_st = {i: 0.0 for i in st_rows}
        for i, (c, f) in enumerate(zip(cands, feats)):
            c.features = f
            c.conf_t = float(conf_t[i])
            c.conf_st = conf_st.get(i)
            c.conf = combine_conf(c.conf_t, c.conf_st)

    def expand(self, query_terms: Sequence[str], config: ExpansionConfig = ExpansionConfig()
               ) -> ExpansionResult:
        query_terms = list(query_terms)
        initial = self.initial_run(query_terms)
        result = ExpansionResult(initial, initial)
        if len(initial) == 0 or config.fbdocs == 0 or config.fbterms == 0:
            return result
        feedback = initial.top(config.fbdocs)
        tile = self.best_tile(query_terms, initial) if config.mode == "kl_st" else None
        cands = self.score_candidates(query_terms, feedback, config, tile)
        result.candidates, result.tile = cands, tile
        if not cands:
            return result
        ranked = sorted(cands, key=lambda c: (-c.kl_final, c.term))[:config.fbterms]
        weights = {c.term: c.kl_final for c in ranked}
        result.selected = [c.term for c in ranked]
        result.query_weights = rocchio_reweight(query_terms, weights, config.beta)
        result.ranked = search(self.index, result.query_weights, self.params, self.cutoff)
        return result
