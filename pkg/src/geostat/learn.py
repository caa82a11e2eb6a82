"""Good/bad expansion-term classifier: training sets, a random forest,
cross-validation, and entropy-based feature quality (IG / GR / SU)."""

from __future__ import annotations

import csv
import logging
import os
import pickle
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from sklearn.ensemble import RandomForestClassifier

log = logging.getLogger(__name__)

MODEL_FORMAT = "geostat-forest"
MODEL_VERSION = 1


@dataclass
class TrainingSet:
    """Feature rows with binary labels (1 = good) and (qid, term) provenance."""

    X: np.ndarray
    y: np.ndarray
    names: list[str]
    provenance: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64).reshape(len(self.y), -1) if len(self.y) else \
            np.zeros((0, len(self.names)))
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.shape[1] != len(self.names):
            raise ValueError(f"{self.X.shape[1]} feature columns but {len(self.names)} names")
        if not set(np.unique(self.y)) <= {0, 1}:
            raise ValueError("labels must be 0/1")
        if not self.provenance:
            self.provenance = [("", str(i)) for i in range(len(self.y))]

    def __len__(self):
        return len(self.y)

    def subset(self, idx) -> "TrainingSet":
        idx = np.asarray(idx, dtype=np.int64)
        return TrainingSet(self.X[idx], self.y[idx], self.names, [self.provenance[i] for i in idx])

    def columns(self, names: Sequence[str]) -> "TrainingSet":
        cols = [self.names.index(n) for n in names]
        return TrainingSet(self.X[:, cols], self.y, list(names), self.provenance)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["qid", "term", "label"] + self.names)
            for (qid, term), row, lab in zip(self.provenance, self.X, self.y):
                w.writerow([qid, term, int(lab)] + [repr(float(v)) for v in row])

    @classmethod
    def read_csv(cls, path) -> "TrainingSet":
        with open(path, newline="", encoding="utf-8") as fh:
            r = csv.reader(fh)
            header = next(r)
            rows = list(r)
        names = header[3:]
        prov = [(row[0], row[1]) for row in rows]
        y = [int(row[2]) for row in rows]
        X = [[float(v) for v in row[3:]] for row in rows]
        return cls(np.asarray(X, dtype=np.float64).reshape(len(rows), len(names)), y, names, prov)


@dataclass(frozen=True)
class LabeledCandidate:
    """A candidate term of a training query with its AP_diff, before sampling."""

    qid: str
    term: str
    diff: float


def balanced_sample(records: Sequence[LabeledCandidate], theta: float, size: int = 1000,
                    seed: int = 0) -> list[tuple[LabeledCandidate, int]]:
    """Equal numbers of good (diff > theta) and bad candidates, at most
    ``size`` in total, drawn at random and returned in provenance order.

    When one class is short the achievable balanced size is used (with a
    warning); no good candidates gives an empty sample.
    """
    recs = sorted(records, key=lambda r: (r.qid, r.term))
    good = [r for r in recs if r.diff > theta]
    bad = [r for r in recs if not r.diff > theta]
    per_class = min(len(good), len(bad), size // 2)
    if per_class < size // 2:
        log.warning("only %d good / %d bad candidates at theta=%g; using %d per class",
                    len(good), len(bad), theta, per_class)
    rng = np.random.default_rng(seed)
    pick_g = rng.choice(len(good), per_class, replace=False) if per_class else []
    pick_b = rng.choice(len(bad), per_class, replace=False) if per_class else []
    chosen = [(good[i], 1) for i in pick_g] + [(bad[i], 0) for i in pick_b]
    return sorted(chosen, key=lambda c: (c[0].qid, c[0].term))


def assemble_training_set(records: Sequence[LabeledCandidate], featurize, names: Sequence[str],
                          theta: float = 0.005, size: int = 1000, seed: int = 0) -> TrainingSet:
    """Balanced training set; ``featurize(record)`` returns the feature row."""
    chosen = balanced_sample(records, theta, size, seed)
    if not chosen:
        return TrainingSet(np.zeros((0, len(names))), [], list(names), [])
    X = np.vstack([featurize(r) for r, _ in chosen])
    return TrainingSet(X, [lab for _, lab in chosen], list(names), [(r.qid, r.term) for r, _ in chosen])


def _threads() -> int:
    env = os.environ.get("GEOSTAT_THREADS")
    return max(1, int(env)) if env else 1


class Forest:
    """Random forest of Gini CART trees (bootstrap, sqrt(d) features per split).

    Training rows are put in a canonical order first, so the model depends on
    the row set and the seed but not on row order.  ``confidence`` is the
    fraction of trees voting good.
    """

    def __init__(self, n_trees: int = 100, seed: int = 0, names: Optional[Sequence[str]] = None):
        self.n_trees = n_trees
        self.seed = seed
        self.names = list(names) if names is not None else None
        self.model: Optional[RandomForestClassifier] = None
        self.constant: Optional[int] = None

    def fit(self, X, y) -> "Forest":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if len(y) == 0:
            raise ValueError("cannot train on an empty set")
        order = np.lexsort(np.column_stack([X, y]).T[::-1])
        X, y = X[order], y[order]
        classes = np.unique(y)
        if len(classes) == 1:
            self.constant = int(classes[0])
            self.model = None
            return self
        self.constant = None
        self.model = RandomForestClassifier(
            n_estimators=self.n_trees, criterion="gini", max_features="sqrt", bootstrap=True,
            min_samples_leaf=1, max_depth=None, random_state=self.seed, n_jobs=_threads())
        self.model.fit(X, y)
        return self

    def confidence(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.constant is not None:
            return np.full(len(X), float(self.constant == 1))
        if self.model is None:
            raise RuntimeError("forest is not trained")
        good = int(np.flatnonzero(self.model.classes_ == 1)[0])
        votes = np.zeros(len(X))
        for tree in self.model.estimators_:
            votes += tree.predict(X) == good
        return votes / len(self.model.estimators_)

    def predict(self, X) -> np.ndarray:
        return (self.confidence(X) >= 0.5).astype(np.int64)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            pickle.dump({"format": MODEL_FORMAT, "version": MODEL_VERSION, "forest": self}, fh)

    @classmethod
    def load(cls, path) -> "Forest":
        with open(path, "rb") as fh:
            data = pickle.load(fh)
        if not isinstance(data, dict) or data.get("format") != MODEL_FORMAT:
            raise ValueError(f"{path}: not a forest model file")
        if data.get("version") != MODEL_VERSION:
            raise ValueError(f"{path}: unsupported model version {data.get('version')}")
        return data["forest"]


def train(ts: TrainingSet, n_trees: int = 100, seed: int = 0) -> Forest:
    return Forest(n_trees, seed, ts.names).fit(ts.X, ts.y)


@dataclass(frozen=True)
class CVReport:
    accuracy: float
    precision_good: float
    recall_good: float
    precision_bad: float
    recall_bad: float
    confusion: tuple  # ((tn, fp), (fn, tp))

    HEADER = ("accuracy", "precision_good", "recall_good", "precision_bad", "recall_bad")

    def row(self) -> tuple:
        return tuple(getattr(self, h) for h in self.HEADER)


def _ratio(a, b) -> float:
    return a / b if b else 0.0


def metrics(y_true, y_pred) -> CVReport:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    tn = int(np.sum((y_true == 0) & (y_pred == 0)))
    fp = int(np.sum((y_true == 0) & (y_pred == 1)))
    fn = int(np.sum((y_true == 1) & (y_pred == 0)))
    return CVReport(_ratio(tp + tn, len(y_true)), _ratio(tp, tp + fp), _ratio(tp, tp + fn),
                    _ratio(tn, tn + fn), _ratio(tn, tn + fp), ((tn, fp), (fn, tp)))


def cross_validate(ts: TrainingSet, scheme="loo", n_trees: int = 100, seed: int = 0) -> CVReport:
    """Leave-one-out (``"loo"``) or k-fold (an int k) cross-validation.

    Folds are contiguous blocks of a seeded permutation.  A training fold
    with only one class predicts that class.
    """
    n = len(ts)
    if n < 2:
        raise ValueError("cross-validation needs at least 2 rows")
    if scheme == "loo":
        k = n
    else:
        k = int(scheme)
        if not 2 <= k <= n:
            raise ValueError(f"k-fold needs 2 <= k <= {n}")
    perm = np.arange(n) if k == n else np.random.default_rng(seed).permutation(n)
    pred = np.empty(n, dtype=np.int64)
    for fold in np.array_split(perm, k):
        train_idx = np.setdiff1d(perm, fold)
        forest = Forest(n_trees, seed).fit(ts.X[train_idx], ts.y[train_idx])
        pred[fold] = forest.predict(ts.X[fold])
    return metrics(ts.y, pred)


# feature quality ---------------------------------------------------------------------

N_BINS = 10
MEASURES = ("IG", "GR", "SU")


def discretize(values, bins: int = N_BINS) -> np.ndarray:
    """Equal-frequency bin codes; features with at most ``bins`` distinct
    values keep one code per value."""
    v = np.asarray(values, dtype=np.float64)
    uniq = np.unique(v)
    if len(uniq) <= bins:
        return np.searchsorted(uniq, v)
    edges = np.unique(np.quantile(v, np.linspace(0, 1, bins + 1)[1:-1]))
    return np.searchsorted(edges, v, side="right")


def entropy(codes) -> float:
    """Shannon entropy in bits."""
    _, counts = np.unique(np.asarray(codes), return_counts=True)
    p = counts / counts.sum()
    return float(-np.sum(p * np.log2(p)))


def conditional_entropy(target, given) -> float:
    """H(target | given) in bits."""
    target = np.asarray(target)
    given = np.asarray(given)
    total = 0.0
    for g in np.unique(given):
        mask = given == g
        total += mask.mean() * entropy(target[mask])
    return total


def information_gain(c, f) -> float:
    return max(0.0, entropy(c) - conditional_entropy(c, f))


class UndefinedRatio(ValueError):
    pass


def gain_ratio(c, f) -> float:
    """IG / H(C); undefined when the class has zero entropy."""
    hc = entropy(c)
    if hc == 0:
        raise UndefinedRatio("class entropy is zero")
    return information_gain(c, f) / hc


def symmetric_uncertainty(c, f) -> float:
    """IG / (H(C) + H(F)); 0 when both entropies vanish."""
    denom = entropy(c) + entropy(f)
    return information_gain(c, f) / denom if denom > 0 else 0.0


@dataclass
class FeatureQualityReport:
    measure: str
    scores: dict[str, float]

    def ranking(self) -> list[tuple[str, float]]:
        return sorted(self.scores.items(), key=lambda kv: (-kv[1], kv[0]))

    def write_csv(self, fh) -> None:
        fh.write(f"rank,feature,{self.measure}\n")
        for i, (name, s) in enumerate(self.ranking(), 1):
            fh.write(f"{i},{name},{s:.6f}\n")


def feature_quality(ts: TrainingSet, measure: str = "IG", bins: int = N_BINS) -> FeatureQualityReport:
    fn = {"IG": information_gain, "GR": gain_ratio, "SU": symmetric_uncertainty}.get(measure)
    if fn is None:
        raise ValueError(f"unknown measure {measure!r}; expected one of {MEASURES}")
    scores = {name: fn(ts.y, discretize(ts.X[:, j], bins)) for j, name in enumerate(ts.names)}
    return FeatureQualityReport(measure, scores)
