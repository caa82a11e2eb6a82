"""Temporal (kurtosis, autocorrelation, cross-correlation) and term-statistics
features of a candidate expansion term."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

WEEK = 7 * 86400
DEFAULT_MAX_LAG = 4
MIN_OVERLAP = 3
DF3_FLOOR = math.log(1e-9)


class UndefinedStatistic(ValueError):
    """The statistic has no value for this series (e.g. zero variance)."""


@dataclass(frozen=True)
class TimeSeries:
    counts: np.ndarray
    origin: int
    bin_width: int = WEEK

    def __post_init__(self):
        object.__setattr__(self, "counts", np.asarray(self.counts, dtype=np.int64))
        if len(self.counts) < 1:
            raise ValueError("time series needs at least one bin")

    def __len__(self):
        return len(self.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def build_time_series(corpus, positions, bin_width: int = WEEK) -> Optional[TimeSeries]:
    """Per-bin counts of timestamped pictures at ``positions``.

    Bins start at the corpus' earliest timestamp and cover up to its latest,
    so series of different tags are aligned.  Returns None when no picture at
    ``positions`` has a timestamp.
    """
    if bin_width <= 0:
        raise ValueError("bin width must be positive")
    span = corpus.time_range()
    if span is None:
        return None
    ts = corpus.ts[np.asarray(positions, dtype=np.int64)]
    ts = ts[~np.isnan(ts)]
    if ts.size == 0:
        return None
    lo, hi = span
    n_bins = (hi - lo) // bin_width + 1
    idx = ((ts.astype(np.int64) - lo) // bin_width)
    return TimeSeries(np.bincount(idx, minlength=n_bins), lo, bin_width)


def _values(series) -> np.ndarray:
    if isinstance(series, TimeSeries):
        series = series.counts
    return np.asarray(series, dtype=np.float64)


def kurtosis(series) -> float:
    """mu_4 / mu_2**2 of the bin counts."""
    x = _values(series)
    c = x - x.mean()
    m2 = np.mean(c * c)
    if x.size < 2 or m2 == 0:
        raise UndefinedStatistic("kurtosis of a constant series")
    return float(np.mean(c ** 4) / (m2 * m2))


def autocorrelation(series) -> float:
    """Lag-1 autocorrelation ``sum (x_t - m)(x_{t+1} - m) / sum (x_t - m)^2``."""
    x = _values(series)
    if x.size < 2:
        raise UndefinedStatistic("autocorrelation needs at least 2 bins")
    c = x - x.mean()
    denom = float(np.dot(c, c))
    if denom == 0:
        raise UndefinedStatistic("autocorrelation of a constant series")
    return float(np.dot(c[:-1], c[1:]) / denom)


def _pearson(a: np.ndarray, b: np.ndarray) -> Optional[float]:
    ca = a - a.mean()
    cb = b - b.mean()
    denom = math.sqrt(float(np.dot(ca, ca)) * float(np.dot(cb, cb)))
    if denom == 0:
        return None
    return float(np.clip(np.dot(ca, cb) / denom, -1.0, 1.0))


def cross_correlation_max(a, b, max_lag: int = DEFAULT_MAX_LAG) -> float:
    """Largest Pearson correlation of ``a[t]`` and ``b[t + lag]`` over
    ``|lag| <= max_lag``, each lag using its overlapping segment.

    Lags whose overlap is shorter than 3 bins or constant on either side are
    skipped; if none remains the statistic is undefined.
    """
    x, y = _values(a), _values(b)
    if x.size != y.size:
        raise ValueError("series must be aligned to the same bins")
    n = x.size
    best = None
    for lag in range(-max_lag, max_lag + 1):
        if lag >= 0:
            xs, ys = x[:n - lag], y[lag:]
        else:
            xs, ys = x[-lag:], y[:n + lag]
        if xs.size < MIN_OVERLAP:
            continue
        r = _pearson(xs, ys)
        if r is not None and (best is None or r > best):
            best = r
    if best is None:
        raise UndefinedStatistic("no lag with a non-degenerate overlap")
    return best


TEMPORAL_NAMES = ("KURT1", "KURT12", "AC1", "AC12", "CC")


@dataclass
class TemporalFeatureVector:
    values: dict[str, float] = field(default_factory=dict)
    valid: dict[str, bool] = field(default_factory=dict)

    def set(self, name: str, fn, *args):
        try:
            self.values[name] = fn(*args) if all(a is not None for a in args) else None
        except UndefinedStatistic:
            self.values[name] = None
        self.valid[name] = self.values[name] is not None
        if self.values[name] is None:
            self.values[name] = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.values[n] for n in TEMPORAL_NAMES]
                        + [float(self.valid[n]) for n in TEMPORAL_NAMES])


def temporal_feature_names() -> list[str]:
    return list(TEMPORAL_NAMES) + [f"{n}_valid" for n in TEMPORAL_NAMES]


def temporal_features(e: str, query_terms: Sequence[str], corpus, bin_width: int = WEEK,
                      max_lag: int = DEFAULT_MAX_LAG) -> TemporalFeatureVector:
    """KURT/AC of the series for ``e`` (1) and for pictures tagged with ``e``
    and at least one query term (12), plus CC between ``e`` and the query."""
    p_e = corpus.postings(e)
    p_q = corpus.union_postings(query_terms)
    s_e = build_time_series(corpus, p_e, bin_width)
    s_eq = build_time_series(corpus, np.intersect1d(p_e, p_q, assume_unique=True), bin_width)
    s_q = build_time_series(corpus, p_q, bin_width)
    vec = TemporalFeatureVector()
    vec.set("KURT1", kurtosis, s_e)
    vec.set("KURT12", kurtosis, s_eq)
    vec.set("AC1", autocorrelation, s_e)
    vec.set("AC12", autocorrelation, s_eq)
    vec.set("CC", lambda a, b: cross_correlation_max(a, b, max_lag), s_e, s_q)
    return vec


# term statistics --------------------------------------------------------------

SCOPES = ("Feedback", "Whole")
TERM_STATS = ("DF0", "DF1", "DF2", "DF3", "CoOccSingle", "CoOccPair")


def df_features(df0: int, n: int) -> tuple[float, float, float, float, bool]:
    """(DF0, DF1, DF2, DF3, valid); DF1-3 are zero when DF0 == 0."""
    if df0 <= 0:
        return 0.0, 0.0, 0.0, 0.0, False
    df3 = math.log((n - df0) / df0) if n > df0 else DF3_FLOOR
    return float(df0), math.log(n / df0), math.log(1 + n / df0), df3, True


def cooccurrence(e_docs: set, term_docs: Sequence[set]) -> tuple[float, float]:
    """CoOccSingle and CoOccPair (log1p of the per-query-term average)."""
    n = len(term_docs)
    if n == 0:
        return 0.0, 0.0
    single = sum(len(e_docs & d) for d in term_docs)
    pair = sum(len(e_docs & a & b) for a, b in combinations(term_docs, 2))
    return math.log1p(single / n), math.log1p(pair / n)


@dataclass
class TermFeatureVector:
    values: dict[str, float] = field(default_factory=dict)
    valid: dict[str, bool] = field(default_factory=dict)

    def as_array(self) -> np.ndarray:
        return np.array([self.values[f"{s}_{c}"] for c in SCOPES for s in TERM_STATS]
                        + [float(self.valid[c]) for c in SCOPES])


def term_feature_names() -> list[str]:
    return [f"{s}_{c}" for c in SCOPES for s in TERM_STATS] + [f"DF_{c}_valid" for c in SCOPES]


def term_features(e: str, query_terms: Sequence[str], feedback_positions, corpus) -> TermFeatureVector:
    """DF0-DF3 and co-occurrence features of ``e`` in the feedback set and
    in the whole collection (natural log)."""
    fb = np.asarray(feedback_positions, dtype=np.int64)
    if fb.size == 0:
        raise ValueError("feedback set is empty")
    fb_set = set(fb.tolist())
    vec = TermFeatureVector()
    whole = {t: set(corpus.postings(t).tolist()) for t in (e, *query_terms)}
    scoped = {
        "Whole": (whole, corpus.N),
        "Feedback": ({t: s & fb_set for t, s in whole.items()}, len(fb_set)),
    }
    for scope, (docs, n) in scoped.items():
        df0, df1, df2, df3, ok = df_features(len(docs[e]), n)
        single, pair = cooccurrence(docs[e], [docs[q] for q in query_terms])
        vec.values.update({f"DF0_{scope}": df0, f"DF1_{scope}": df1, f"DF2_{scope}": df2,
                           f"DF3_{scope}": df3, f"CoOccSingle_{scope}": single,
                           f"CoOccPair_{scope}": pair})
        vec.valid[scope] = ok
    return vec
