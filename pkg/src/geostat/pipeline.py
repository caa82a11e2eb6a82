"""End-to-end orchestration: index, tiles, training, expansion, evaluation."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import corpus as corpus_mod
from .expansion import (BAD, GOOD, ExpansionConfig, Expander, FBDOCS_GRID, FBTERMS_GRID, SkipCandidate,
                        ZkycIndex, ap_diff, extract_candidates)
from .features import FeatureExtractor, st_feature_names, t_feature_names
from .geo import DEFAULT_MIN_TILE_PICTURES, TileIndex
from .learn import Forest, LabeledCandidate, TrainingSet, assemble_training_set
from .pointpattern import scale_grid
from .retrieval import (Bm25Params, InvertedIndex, RankedList, UndefinedMetric, average_precision,
                        mean_ap, paired_t_test, search, write_run)
from .spatial_features import SpatialProfiler

log = logging.getLogger(__name__)

SYSTEMS = ("bm25", "kl", "kl_zkyc", "kl_t", "kl_st")


class PipelineError(RuntimeError):
    """A stage cannot run; the message names the stage."""


@dataclass(frozen=True)
class PipelineConfig:
    corpus: str = "corpus.jsonl"
    groundtruth: str = "groundtruth.jsonl"
    queries: str = "queries.jsonl"
    out: str = "run"
    fbdocs: int = 20
    fbterms: int = 15
    alpha: float = 0.5
    beta: float = 0.4
    theta: float = 0.005
    cutoff: int = 1000
    train_size: int = 1000
    n_trees: int = 100
    n_sims: int = 99
    seed: int = 0
    min_tile_pictures: int = DEFAULT_MIN_TILE_PICTURES
    cross_null: str = "labelling"
    systems: str = ",".join(SYSTEMS)
    grid: bool = False

    def expansion(self, mode: str, fbdocs: Optional[int] = None, fbterms: Optional[int] = None):
        return ExpansionConfig(self.fbdocs if fbdocs is None else fbdocs,
                               self.fbterms if fbterms is None else fbterms,
                               self.beta, self.alpha, self.theta, mode)

    def system_list(self) -> list[str]:
        out = [s.strip() for s in self.systems.split(",") if s.strip()]
        bad = [s for s in out if s not in SYSTEMS]
        if bad:
            raise ValueError(f"unknown systems {bad}; expected a subset of {SYSTEMS}")
        return out


def parse_config_text(text: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        values[k.replace("-", "_")] = v
    return values


def load_config(path, overrides: Optional[dict] = None) -> PipelineConfig:
    values = parse_config_text(Path(path).read_text(encoding="utf-8"))
    values.update({k: str(v) for k, v in (overrides or {}).items()})
    base = Path(path).parent
    kinds = {f.name: f.type for f in fields(PipelineConfig)}
    out = {}
    for k, v in values.items():
        if k not in kinds:
            raise ValueError(f"unknown config key {k!r}")
        kind = kinds[k]
        if kind == "int":
            out[k] = int(v)
        elif kind == "float":
            out[k] = float(v)
        elif kind == "bool":
            out[k] = v.lower() in ("1", "true", "yes", "on")
        else:
            out[k] = v
    for k in ("corpus", "groundtruth", "queries", "out"):
        if k in out and not Path(out[k]).is_absolute():
            out[k] = str(base / out[k])
    return PipelineConfig(**out)


@dataclass
class Services:
    corpus: object
    index: InvertedIndex
    tiles: TileIndex
    extractor: FeatureExtractor
    zkyc: ZkycIndex
    params: Bm25Params = Bm25Params()
    cutoff: int = 1000

    def expander(self, forest_t=None, forest_st=None) -> Expander:
        return Expander(self.corpus, self.index, self.tiles, self.extractor, forest_t, forest_st,
                        self.zkyc, self.params, self.cutoff)


def build_services(corpus, min_tile_pictures: int = DEFAULT_MIN_TILE_PICTURES, n_sims: int = 99,
                   seed: int = 0, cross_null: str = "labelling", cutoff: int = 1000,
                   tiles: Optional[TileIndex] = None) -> Services:
    index = InvertedIndex.from_corpus(corpus)
    tiles = tiles if tiles is not None else TileIndex.build(corpus, min_tile_pictures)
    profiler = SpatialProfiler(corpus, tiles, scale_grid(), n_sims, seed, cross_null)
    extractor = FeatureExtractor(corpus, tiles, profiler=profiler)
    return Services(corpus, index, tiles, extractor, ZkycIndex(corpus), cutoff=cutoff)


def relevant_ids(gt, query) -> frozenset:
    return gt.relevant(query.event_id)


# training -------------------------------------------------------------------------------

@dataclass
class QueryContext:
    query: object
    initial: RankedList
    feedback: np.ndarray
    tile: Optional[int]


def label_query(services: Services, query, gt, fbdocs: int) -> tuple[Optional[QueryContext], list[LabeledCandidate]]:
    """AP_diff for every candidate of one training query (skipped if AP(Q) = 0)."""
    rel = relevant_ids(gt, query)
    if not rel:
        return None, []
    exp = services.expander()
    terms = list(query.terms)
    initial = exp.initial_run(terms)
    ap_q = average_precision(initial.doc_ids, rel) if len(initial) else 0.0
    feedback = initial.top(fbdocs)
    ctx = QueryContext(query, initial, feedback, exp.best_tile(terms, initial))
    out = []
    for e in extract_candidates(feedback, services.corpus, terms):
        run = search(services.index, terms + [e], services.params, services.cutoff)
        try:
            diff = ap_diff(ap_q, average_precision(run.doc_ids, rel))
        except SkipCandidate:
            return ctx, []
        out.append(LabeledCandidate(query.id, e, diff))
    return ctx, out


@dataclass
class TrainedModels:
    forest_t: Optional[Forest]
    forest_st: Optional[Forest]
    training_t: TrainingSet
    training_st: TrainingSet
    n_candidates: int = 0
    n_good: int = 0


def train_models(services: Services, queries: Sequence, gt, cfg: PipelineConfig) -> TrainedModels:
    """Label the training queries' candidates, sample a balanced set, extract
    features and fit the temporal and spatio-temporal forests."""
    contexts = {}
    records = []
    for q in queries:
        ctx, recs = label_query(services, q, gt, cfg.fbdocs)
        if ctx is not None and recs:
            contexts[q.id] = ctx
            records += recs
    n_good = sum(r.diff > cfg.theta for r in records)
    log.info("training candidates: %d (%d good at theta=%g)", len(records), n_good, cfg.theta)
    feats = {}

    def featurize(r: LabeledCandidate):
        ctx = contexts[r.qid]
        f = services.extractor.extract(r.term, list(ctx.query.terms), ctx.feedback, ctx.tile)
        feats[(r.qid, r.term)] = f
        return f.st_vector()

    full = assemble_training_set(records, featurize, st_feature_names(), cfg.theta, cfg.train_size, cfg.seed)
    ts_t = full.columns(t_feature_names())
    keep = [i for i, p in enumerate(full.provenance) if feats[p].spatial_available]
    ts_st = full.subset(keep)
    forest_t = Forest(cfg.n_trees, cfg.seed, ts_t.names).fit(ts_t.X, ts_t.y) if len(ts_t) else None
    forest_st = Forest(cfg.n_trees, cfg.seed, ts_st.names).fit(ts_st.X, ts_st.y) if len(ts_st) else None
    return TrainedModels(forest_t, forest_st, ts_t, ts_st, len(records), n_good)


# evaluation -----------------------------------------------------------------------------

def run_system(services: Services, models: Optional[TrainedModels], queries: Sequence, system: str,
               cfg: PipelineConfig, fbdocs=None, fbterms=None) -> dict[str, RankedList]:
    exp = services.expander(models.forest_t if models else None, models.forest_st if models else None)
    runs = {}
    for q in queries:
        if system == "bm25":
            runs[q.id] = exp.initial_run(q.terms)
        else:
            runs[q.id] = exp.expand(q.terms, cfg.expansion(system, fbdocs, fbterms)).ranked
    return runs


def per_query_ap(runs: dict[str, RankedList], queries: Sequence, gt) -> dict[str, float]:
    out = {}
    for q in queries:
        try:
            out[q.id] = average_precision(runs[q.id].doc_ids, relevant_ids(gt, q))
        except UndefinedMetric:
            log.info("query %s has no relevant pictures; skipped", q.id)
    return out


@dataclass
class Evaluation:
    ap: dict[str, dict[str, float]]  # system -> qid -> AP
    map: dict[str, float] = field(default_factory=dict)
    p_values: dict[tuple[str, str], float] = field(default_factory=dict)

    def compare(self, a: str, b: str):
        qids = sorted(set(self.ap[a]) & set(self.ap[b]))
        return paired_t_test([self.ap[a][q] for q in qids], [self.ap[b][q] for q in qids])


def evaluate(ap_by_system: dict[str, dict[str, float]]) -> Evaluation:
    ev = Evaluation(ap_by_system)
    for s, aps in ap_by_system.items():
        if aps:
            ev.map[s] = mean_ap(aps.values())
    systems = list(ap_by_system)
    for a in systems:
        for b in systems:
            if a != b and len(ap_by_system[a]) >= 2:
                ev.p_values[(a, b)] = ev.compare(a, b).p
    return ev


def write_evaluation(ev: Evaluation, path) -> None:
    systems = list(ev.ap)
    qids = sorted(set().union(*(set(v) for v in ev.ap.values())))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("qid," + ",".join(systems) + "\n")
        for q in qids:
            fh.write(q + "," + ",".join(repr(ev.ap[s].get(q, float("nan"))) for s in systems) + "\n")
        fh.write("MAP," + ",".join(repr(ev.map.get(s, float("nan"))) for s in systems) + "\n")
    with open(Path(path).with_suffix(".pvalues.csv"), "w", encoding="utf-8") as fh:
        fh.write("system,baseline,p_one_tailed\n")
        for (a, b), p in sorted(ev.p_values.items()):
            fh.write(f"{a},{b},{p!r}\n")


# full run -------------------------------------------------------------------------------

def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def split_queries(queries):
    train = [q for q in queries if q.split == "train"]
    test = [q for q in queries if q.split == "test"]
    if not train and not test:
        # no split given: first 100 by id train, the rest test
        qs = sorted(queries, key=lambda q: q.id)
        train, test = qs[:100], qs[100:]
    overlap = {q.id for q in train} & {q.id for q in test}
    if overlap:
        raise PipelineError(f"split: queries in both train and test: {sorted(overlap)[:5]}")
    return train, test


def _load(stage: str, fn, path):
    if not Path(path).exists():
        raise PipelineError(f"{stage}: input file not found: {path}")
    return fn(path)


def run_pipeline(cfg: PipelineConfig) -> dict:
    """ingest -> index -> tiles -> train -> expand -> evaluate; returns the manifest."""
    started = time.time()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    corpus = _load("ingest", corpus_mod.parse_corpus, cfg.corpus)
    gt = _load("ingest", lambda p: corpus_mod.parse_ground_truth(p, corpus), cfg.groundtruth)
    queries = _load("ingest", corpus_mod.parse_queries, cfg.queries)
    train_q, test_q = split_queries(queries)
    if not test_q:
        raise PipelineError("evaluate: no test queries")
    services = build_services(corpus, cfg.min_tile_pictures, cfg.n_sims, cfg.seed, cfg.cross_null, cfg.cutoff)
    services.tiles.save(out / "tiles.json.gz")
    systems = cfg.system_list()
    models = None
    manifest = {
        "config": asdict(cfg),
        "inputs": {k: {"path": str(getattr(cfg, k)), "sha256": _sha256(getattr(cfg, k))}
                   for k in ("corpus", "groundtruth", "queries")},
        "corpus_hash": corpus.content_hash(),
        "queries": {"train": len(train_q), "test": len(test_q)},
        "tiles": {"indexed": len(services.tiles),
                  "significant": sum(t.significant for t in services.tiles.tiles())},
        "outputs": {"tiles": str(out / "tiles.json.gz")},
        "runs": {},
    }
    if {"kl_t", "kl_st"} & set(systems):
        if not train_q:
            raise PipelineError("train: no training queries")
        models = train_models(services, train_q, gt, cfg)
        for name, forest, ts in (("t", models.forest_t, models.training_t),
                                 ("st", models.forest_st, models.training_st)):
            ts.write_csv(out / f"training_{name}.csv")
            manifest["outputs"][f"training_{name}"] = str(out / f"training_{name}.csv")
            if forest is not None:
                forest.save(out / f"forest_{name}.pkl")
                manifest["outputs"][f"forest_{name}"] = str(out / f"forest_{name}.pkl")
        manifest["training"] = {"candidates": models.n_candidates, "good": models.n_good,
                                "rows_t": len(models.training_t), "rows_st": len(models.training_st)}
    settings = ([(k, n) for k in FBDOCS_GRID for n in FBTERMS_GRID] if cfg.grid
                else [(cfg.fbdocs, cfg.fbterms)])
    summary = []
    for k, n in settings:
        aps = {}
        for s in systems:
            runs = run_system(services, models, test_q, s, cfg, k, n)
            run_path = out / f"run_{s}_k{k}_n{n}.txt"
            with open(run_path, "w", encoding="utf-8") as fh:
                write_run(runs, fh, tag=s)
            manifest["runs"][f"{s}_k{k}_n{n}"] = str(run_path)
            aps[s] = per_query_ap(runs, test_q, gt)
        ev = evaluate(aps)
        eval_path = out / f"eval_k{k}_n{n}.csv"
        write_evaluation(ev, eval_path)
        summary.append({"fbdocs": k, "fbterms": n, "map": ev.map,
                        "p_vs_kl": {s: ev.p_values.get((s, "kl")) for s in systems if s != "kl"},
                        "eval": str(eval_path)})
    manifest["results"] = summary
    manifest["notes"] = ["ZKYC relatedness counts pictures per cell; user identity is not in the corpus format."]
    manifest["elapsed_s"] = round(time.time() - started, 1)
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
    return manifest
