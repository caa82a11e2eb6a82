"""Inverted tag index, Okapi BM25 ranking, and AP / MAP / paired t-test."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np
from scipy import stats

DEFAULT_CUTOFF = 1000


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.2
    k3: float = 8.0
    b: float = 0.75

    def __post_init__(self):
        if self.k1 < 0 or self.k3 < 0 or not 0 <= self.b <= 1:
            raise ValueError(f"invalid BM25 parameters {self}")


class InvertedIndex:
    """Posting lists ``term -> (doc positions, tf)`` over a list of documents.

    Documents are addressed by position; ``doc_ids`` maps positions back to
    external ids.  Positions are assumed to be in ascending id order, which
    is how :class:`~geostat.corpus.Corpus` stores pictures.
    """

    def __init__(self, docs: Sequence[Sequence[str]], doc_ids: Optional[Sequence[str]] = None):
        self.doc_ids = list(doc_ids) if doc_ids is not None else [str(i) for i in range(len(docs))]
        if len(self.doc_ids) != len(docs):
            raise ValueError("doc_ids and docs differ in length")
        lists: dict[str, dict[int, int]] = {}
        lengths = np.zeros(len(docs), dtype=np.float64)
        for i, terms in enumerate(docs):
            lengths[i] = len(terms)
            for t in terms:
                d = lists.setdefault(t, {})
                d[i] = d.get(i, 0) + 1
        self.postings = {
            t: (np.fromiter(d.keys(), np.int64, len(d)), np.fromiter(d.values(), np.float64, len(d)))
            for t, d in lists.items()
        }
        self.doc_len = lengths
        self.N = len(docs)
        self.avgdl = float(lengths.mean()) if len(docs) else 0.0
        self.df = {t: len(p[0]) for t, p in self.postings.items()}

    @classmethod
    def from_corpus(cls, corpus) -> "InvertedIndex":
        return cls([p.tags for p in corpus.pictures], [p.id for p in corpus.pictures])


@dataclass(frozen=True)
class RankedList:
    """Documents in (score desc, position asc) order."""

    positions: np.ndarray
    scores: np.ndarray
    doc_ids: tuple

    def __len__(self):
        return len(self.positions)

    def __iter__(self):
        return iter(zip(self.doc_ids, self.scores.tolist()))

    @classmethod
    def empty(cls) -> "RankedList":
        return cls(np.empty(0, np.int64), np.empty(0), ())

    def top(self, k: int) -> np.ndarray:
        return self.positions[:k]


Query = Union[Sequence[str], Mapping[str, float]]


def _query_weights(query: Query) -> dict[str, float]:
    if isinstance(query, Mapping):
        return {t: float(w) for t, w in query.items() if w > 0}
    weights: dict[str, float] = {}
    for t in query:
        weights[t] = weights.get(t, 0.0) + 1.0
    return weights


def idf(N: int, df: int) -> float:
    return math.log((N - df + 0.5) / (df + 0.5))


def search(index: InvertedIndex, query: Query, params: Bm25Params = Bm25Params(),
           cutoff: Optional[int] = DEFAULT_CUTOFF) -> RankedList:
    """Okapi BM25 over the documents matching at least one query term.

    ``query`` is a term list (query tf = multiplicity) or a ``term -> weight``
    mapping, whose weight takes the place of the query tf in the k3 factor.
    """
    weights = _query_weights(query)
    scores = np.zeros(index.N)
    matched = np.zeros(index.N, dtype=bool)
    rel_len = index.doc_len / index.avgdl if index.avgdl > 0 else np.zeros(index.N)
    norm = params.k1 * ((1 - params.b) + params.b * rel_len)
    for term in sorted(weights):
        if term not in index.postings:
            continue
        pos, tf = index.postings[term]
        qtf = weights[term]
        qpart = (params.k3 + 1) * qtf / (params.k3 + qtf)
        w = idf(index.N, index.df[term]) * qpart
        scores[pos] += w * (params.k1 + 1) * tf / (norm[pos] + tf)
        matched[pos] = True
    hits = np.flatnonzero(matched)
    if hits.size == 0:
        return RankedList.empty()
    order = np.lexsort((hits, -scores[hits]))
    if cutoff is not None:
        order = order[:cutoff]
    top = hits[order]
    return RankedList(top, scores[top], tuple(index.doc_ids[i] for i in top))


# evaluation -------------------------------------------------------------------

class UndefinedMetric(ValueError):
    pass


def average_precision(ranked: Iterable, relevant) -> float:
    """AP over a ranked sequence of doc ids (or (id, score) pairs)."""
    relevant = set(relevant)
    if not relevant:
        raise UndefinedMetric("no relevant documents")
    hits = 0
    total = 0.0
    for rank, item in enumerate(ranked, 1):
        doc = item[0] if isinstance(item, tuple) else item
        if doc in relevant:
            hits += 1
            total += hits / rank
    return total / len(relevant)


def mean_ap(aps: Iterable[float]) -> float:
    aps = list(aps)
    if not aps:
        raise UndefinedMetric("no queries to average")
    return float(np.mean(aps))


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    n: int
    mean_diff: float


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """One-tailed paired t-test of H1: mean(a) > mean(b)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("paired samples differ in length")
    n = len(a)
    if n < 2:
        raise ValueError("paired t-test needs at least 2 pairs")
    d = a - b
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0:
        if mean > 0:
            return TTestResult(math.inf, 0.0, n, mean)
        if mean < 0:
            return TTestResult(-math.inf, 1.0, n, mean)
        return TTestResult(0.0, 0.5, n, mean)
    t = mean / (sd / math.sqrt(n))
    return TTestResult(t, float(stats.t.sf(t, n - 1)), n, mean)


# run files --------------------------------------------------------------------

def write_run(runs: Mapping[str, RankedList], fh, tag: str = "geostat") -> None:
    """TREC-style ``qid doc rank score tag`` lines, queries in sorted order."""
    for qid in sorted(runs):
        for rank, (doc, score) in enumerate(runs[qid], 1):
            fh.write(f"{qid} {doc} {rank} {score!r} {tag}\n")


def read_run(fh) -> dict[str, list[tuple[str, float]]]:
    """Parse a run file; also accepts the 6-column ``qid Q0 doc rank score tag`` form."""
    runs: dict[str, list[tuple[int, str, float]]] = {}
    for lineno, line in enumerate(fh, 1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) == 6:
            parts = [parts[0]] + parts[2:]
        if len(parts) != 5:
            raise ValueError(f"line {lineno}: expected 5 or 6 columns, got {len(parts)}")
        qid, doc, rank, score, _ = parts
        runs.setdefault(qid, []).append((int(rank), doc, float(score)))
    return {q: [(d, s) for _, d, s in sorted(rows)] for q, rows in runs.items()}
