"""``geostat`` command line: one subcommand per pipeline stage.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import pickle
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .corpus import CorpusError, parse_corpus, parse_ground_truth, parse_queries, write_corpus
from .expansion import MODES, ExpansionConfig, extract_candidates
from .features import write_feature_csv
from .geo import DEFAULT_MIN_TILE_PICTURES, TileIndex, sidecar_path
from .learn import MEASURES, CVReport, Forest, TrainingSet, UndefinedRatio, cross_validate, feature_quality
from .pipeline import (PipelineConfig, PipelineError, build_services, evaluate, load_config, run_pipeline,
                       split_queries, train_models)
from .pointpattern import (CROSS_NULLS, DegeneratePattern, classify_interaction, cross_d_profile, d_profile,
                           scale_grid, write_profile_csv)
from .retrieval import (Bm25Params, DEFAULT_CUTOFF, InvertedIndex, UndefinedMetric,
                        average_precision, read_run, search, write_run)
from .synth import SynthConfig, generate

log = logging.getLogger("geostat")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@contextmanager
def _output(path: Optional[str]):
    if path in (None, "-"):
        yield sys.stdout
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _key_values(items) -> dict[str, str]:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise UsageError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def _require(path: Optional[str], what: str) -> str:
    if not path:
        raise UsageError(f"--{what} is required")
    if not Path(path).exists():
        raise FileNotFoundError(f"{what} file not found: {path}")
    return path


def _load_corpus(args):
    return parse_corpus(_require(args.corpus, "corpus"))


def _load_queries(args, split: Optional[str] = None):
    queries = parse_queries(_require(args.queries, "queries"))
    if split == "train":
        return split_queries(queries)[0]
    if split == "test":
        return split_queries(queries)[1]
    return queries


def _tiles(args, corpus) -> TileIndex:
    path = getattr(args, "tiles", None)
    if path:
        return TileIndex.load(_require(path, "tiles"), corpus)
    return TileIndex.build(corpus, args.min_tile_pictures)


def _services(args, corpus):
    return build_services(corpus, args.min_tile_pictures, args.n_sims, args.seed, args.cross_null,
                          args.cutoff, tiles=_tiles(args, corpus))


# subcommands ---------------------------------------------------------------------------

def cmd_ingest(args) -> int:
    corpus = _load_corpus(args)
    summary = {
        "pictures": corpus.N, "vocabulary": corpus.W, "skipped": corpus.skipped,
        "geotagged": int(np.sum(~np.isnan(corpus.lat))), "timestamped": int(np.sum(~np.isnan(corpus.ts))),
        "content_hash": corpus.content_hash(),
    }
    if args.groundtruth:
        gt = parse_ground_truth(_require(args.groundtruth, "groundtruth"), corpus)
        summary["events"] = len(gt)
    if args.queries:
        summary["queries"] = len(_load_queries(args))
    if args.out:
        write_corpus(corpus, args.out)
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_index(args) -> int:
    corpus = _load_corpus(args)
    index = InvertedIndex.from_corpus(corpus)
    if args.out:
        with open(args.out, "wb") as fh:
            pickle.dump({"corpus_hash": corpus.content_hash(), "index": index}, fh)
    print(json.dumps({"documents": index.N, "terms": len(index.postings), "avgdl": index.avgdl}, indent=2))
    return EXIT_OK


def cmd_tiles(args) -> int:
    corpus = _load_corpus(args)
    tiles = TileIndex.build(corpus, args.min_tile_pictures)
    if args.out_dir:
        Path(args.out_dir).mkdir(parents=True, exist_ok=True)
        path = sidecar_path(args.out_dir, corpus)
        tiles.save(path)
        log.info("tile index written to %s", path)
    with _output(args.out) as fh:
        fh.write("tile_id,lat_floor,lon_floor,pictures,significant\n")
        for t in tiles.tiles():
            fh.write(f"{t.tile_id},{t.lat_floor},{t.lon_floor},{t.picture_count},{int(t.significant)}\n")
    return EXIT_OK


def cmd_kfn(args) -> int:
    from .spatial_features import SpatialProfiler

    corpus = _load_corpus(args)
    tiles = TileIndex.build(corpus, 0)
    prof = SpatialProfiler(corpus, tiles, scale_grid(args.step, args.scales), args.n_sims, args.seed,
                           args.cross_null)
    tag = args.tag
    tid = args.tile
    if tid is None:
        counts = {t: len(prof.pictures(t, [tag])) for t in tiles.tile_pictures}
        if not counts or max(counts.values()) == 0:
            raise CorpusError(f"tag {tag!r} has no geotagged pictures")
        tid = max(sorted(counts), key=lambda t: counts[t])
    pi = prof.pattern(tid, prof.pictures(tid, [tag]), tag)
    if args.cross:
        pj = prof.pattern(tid, prof.pictures(tid, [args.cross]), args.cross)
        profile = cross_d_profile(pi, pj, prof.grid, args.n_sims, args.seed, cross_null=args.cross_null)
    else:
        profile = d_profile(pi, prof.grid, args.n_sims, args.seed)
    with _output(args.out) as fh:
        write_profile_csv(profile, fh)
    _, verdict = classify_interaction(profile)
    print(f"tile {tid}: {verdict}", file=sys.stderr)
    return EXIT_OK


def cmd_features(args) -> int:
    corpus = _load_corpus(args)
    services = _services(args, corpus)
    exp = services.expander()
    rows = []
    for q in _load_queries(args, args.split):
        terms = list(q.terms)
        initial = exp.initial_run(terms)
        if not len(initial):
            continue
        feedback = initial.top(args.fbdocs)
        tile = exp.best_tile(terms, initial)
        for e in extract_candidates(feedback, corpus, terms):
            rows.append((q.id, services.extractor.extract(e, terms, feedback, tile)))
    with _output(args.out) as fh:
        write_feature_csv(rows, fh)
    return EXIT_OK


def _pipeline_config(args, **extra) -> PipelineConfig:
    return PipelineConfig(fbdocs=args.fbdocs, fbterms=getattr(args, "fbterms", 15), alpha=args.alpha,
                          beta=args.beta, theta=args.theta, cutoff=args.cutoff, n_sims=args.n_sims,
                          seed=args.seed, min_tile_pictures=args.min_tile_pictures,
                          cross_null=args.cross_null, **extra)


def cmd_train(args) -> int:
    corpus = _load_corpus(args)
    gt = parse_ground_truth(_require(args.groundtruth, "groundtruth"), corpus)
    queries = _load_queries(args, "train")
    if not queries:
        raise PipelineError("train: no training queries")
    cfg = _pipeline_config(args, train_size=args.train_size, n_trees=args.n_trees)
    models = train_models(_services(args, corpus), queries, gt, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, forest, ts in (("t", models.forest_t, models.training_t),
                             ("st", models.forest_st, models.training_st)):
        ts.write_csv(out / f"training_{name}.csv")
        if forest is not None:
            forest.save(out / f"forest_{name}.pkl")
    print(json.dumps({"candidates": models.n_candidates, "good": models.n_good,
                      "rows_t": len(models.training_t), "rows_st": len(models.training_st)}, indent=2))
    return EXIT_OK


def _read_training(path) -> TrainingSet:
    ts = TrainingSet.read_csv(_require(path, "training"))
    if len(ts) == 0:
        raise CorpusError(f"{path}: training set is empty")
    return ts


def cmd_xval(args) -> int:
    ts = _read_training(args.training)
    scheme = "loo" if args.scheme == "loo" else int(args.scheme)
    rep = cross_validate(ts, scheme, args.n_trees, args.seed)
    with _output(args.out) as fh:
        fh.write(",".join(CVReport.HEADER) + "\n")
        fh.write(",".join(f"{v:.6f}" for v in rep.row()) + "\n")
    return EXIT_OK


def cmd_featquality(args) -> int:
    ts = _read_training(args.training)
    try:
        report = feature_quality(ts, args.measure, args.bins)
    except UndefinedRatio as exc:
        raise CorpusError(f"gain ratio undefined: {exc}") from exc
    with _output(args.out) as fh:
        report.write_csv(fh)
    return EXIT_OK


def _load_forest(model_dir: Optional[str], name: str) -> Optional[Forest]:
    if not model_dir:
        return None
    path = Path(model_dir) / f"forest_{name}.pkl"
    return Forest.load(path) if path.exists() else None


def cmd_expand(args) -> int:
    corpus = _load_corpus(args)
    forest_t = _load_forest(args.model_dir, "t")
    forest_st = _load_forest(args.model_dir, "st")
    if args.mode in ("kl_t", "kl_st") and forest_t is None:
        raise UsageError(f"mode {args.mode} needs --model-dir with a trained forest_t.pkl")
    services = _services(args, corpus)
    exp = services.expander(forest_t, forest_st)
    config = ExpansionConfig(args.fbdocs, args.fbterms, args.beta, args.alpha, args.theta, args.mode)
    runs = {q.id: exp.expand(q.terms, config).ranked for q in _load_queries(args, args.split)}
    with _output(args.out) as fh:
        write_run(runs, fh, tag=args.mode)
    return EXIT_OK


def cmd_search(args) -> int:
    corpus = _load_corpus(args)
    index = InvertedIndex.from_corpus(corpus)
    runs = {q.id: search(index, list(q.terms), Bm25Params(), args.cutoff)
            for q in _load_queries(args, args.split)}
    with _output(args.out) as fh:
        write_run(runs, fh, tag=args.model)
    return EXIT_OK


def _named_runs(items) -> dict[str, str]:
    out = {}
    for item in items:
        name, _, path = item.rpartition("=")
        name = name or Path(path).stem
        if name in out:
            raise UsageError(f"run name {name!r} given twice")
        out[name] = path
    return out


def cmd_evaluate(args) -> int:
    corpus = _load_corpus(args)
    gt = parse_ground_truth(_require(args.groundtruth, "groundtruth"), corpus)
    queries = _load_queries(args, args.split)
    aps = {}
    for name, path in _named_runs(args.run).items():
        with open(_require(path, "run"), encoding="utf-8") as fh:
            run = read_run(fh)
        aps[name] = {}
        for q in queries:
            try:
                aps[name][q.id] = average_precision([d for d, _ in run.get(q.id, [])], gt.relevant(q.event_id))
            except UndefinedMetric:
                log.info("query %s has no relevant pictures; skipped", q.id)
    ev = evaluate(aps)
    systems = list(aps)
    qids = sorted(set().union(*(set(v) for v in aps.values())))
    with _output(args.out) as fh:
        fh.write("qid," + ",".join(systems) + "\n")
        for q in qids:
            fh.write(q + "," + ",".join(f"{aps[s].get(q, float('nan')):.6f}" for s in systems) + "\n")
    print("system,MAP")
    for s in systems:
        print(f"{s},{ev.map.get(s, float('nan')):.6f}")
    if ev.p_values:
        print("system,baseline,p_one_tailed")
        for (a, b), p in sorted(ev.p_values.items()):
            print(f"{a},{b},{p:.6g}")
    return EXIT_OK


def cmd_synth(args) -> int:
    values = _key_values(args.set)
    values["seed"] = str(args.seed)
    sc = generate(SynthConfig.from_mapping(values))
    paths = sc.write(args.out)
    print(json.dumps({k: str(v) for k, v in paths.items()} | {"pictures": len(sc.pictures),
                                                                "events": len(sc.ground_truth)}, indent=2))
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = load_config(_require(args.config, "config"), _key_values(args.set))
    manifest = run_pipeline(cfg)
    for res in manifest["results"]:
        maps = " ".join(f"{s}={m:.4f}" for s, m in res["map"].items())
        print(f"k={res['fbdocs']} n={res['fbterms']} {maps}")
    return EXIT_OK


# parser --------------------------------------------------------------------------------

def _add_data(p, gt=False, queries=False):
    p.add_argument("--corpus", required=True, help="picture records (JSON lines)")
    if gt:
        p.add_argument("--groundtruth", required=True, help="event clusters (JSON lines)")
    if queries:
        p.add_argument("--queries", "--query-file", dest="queries", required=True, help="queries (JSON lines)")
        p.add_argument("--split", choices=("train", "test"), help="only use queries of this split")


def _add_services(p):
    p.add_argument("--min-tile-pictures", type=int, default=DEFAULT_MIN_TILE_PICTURES)
    p.add_argument("--tiles", help="saved tile index (built from the corpus if absent)")
    p.add_argument("--n-sims", type=int, default=99)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cross-null", choices=CROSS_NULLS, default="labelling")
    p.add_argument("--cutoff", type=int, default=DEFAULT_CUTOFF)


def _add_expansion(p, terms=True):
    p.add_argument("--fbdocs", type=int, default=20)
    if terms:
        p.add_argument("--fbterms", type=int, default=15)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--beta", type=float, default=0.4)
    p.add_argument("--theta", type=float, default=0.005)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="geostat", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"geostat {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="validate and normalize input files")
    _add_data(p)
    p.add_argument("--groundtruth")
    p.add_argument("--queries", "--query-file", dest="queries")
    p.add_argument("--out", help="write the preprocessed corpus here")
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("index", help="build the inverted tag index")
    _add_data(p)
    p.add_argument("--out", help="pickle the index here")
    p.set_defaults(fn=cmd_index)

    p = sub.add_parser("tiles", help="build the 1-degree tile index")
    _add_data(p)
    p.add_argument("--min-tile-pictures", type=int, default=DEFAULT_MIN_TILE_PICTURES)
    p.add_argument("--out-dir", help="save the tile index sidecar in this directory")
    p.add_argument("--out", help="tile table CSV (default stdout)")
    p.set_defaults(fn=cmd_tiles)

    p = sub.add_parser("kfn", help="K/L/D profile of a tag (or tag pair) in one tile")
    _add_data(p)
    p.add_argument("--tag", required=True)
    p.add_argument("--cross", help="second tag for the cross-D function")
    p.add_argument("--tile", type=int, help="tile id (default: the tile with most pictures of --tag)")
    p.add_argument("--step", type=float, default=0.1, help="scale step in km")
    p.add_argument("--scales", type=int, default=10, help="number of scales")
    p.add_argument("--n-sims", type=int, default=99)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cross-null", choices=CROSS_NULLS, default="labelling")
    p.add_argument("--out", help="CSV output (default stdout)")
    p.set_defaults(fn=cmd_kfn)

    p = sub.add_parser("features", help="feature rows for every (query, candidate) pair")
    _add_data(p, queries=True)
    _add_services(p)
    p.add_argument("--fbdocs", type=int, default=20)
    p.add_argument("--out", help="CSV output (default stdout)")
    p.set_defaults(fn=cmd_features)

    p = sub.add_parser("train", help="label candidates of training queries and fit the forests")
    _add_data(p, gt=True, queries=True)
    _add_services(p)
    _add_expansion(p, terms=False)
    p.add_argument("--train-size", type=int, default=1000)
    p.add_argument("--n-trees", type=int, default=100)
    p.add_argument("--out", required=True, help="model directory")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("xval", help="cross-validate a forest on a training CSV")
    p.add_argument("--training", required=True)
    p.add_argument("--scheme", default="loo", help="'loo' or the number of folds")
    p.add_argument("--n-trees", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_xval)

    p = sub.add_parser("featquality", help="rank features by IG, GR or SU")
    p.add_argument("--training", required=True)
    p.add_argument("--measure", choices=MEASURES, default="IG")
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_featquality)

    p = sub.add_parser("expand", help="run expanded queries")
    _add_data(p, queries=True)
    _add_services(p)
    _add_expansion(p)
    p.add_argument("--mode", choices=MODES, default="kl_st")
    p.add_argument("--model-dir", help="directory holding forest_t.pkl / forest_st.pkl")
    p.add_argument("--out", help="run file (default stdout)")
    p.set_defaults(fn=cmd_expand)

    p = sub.add_parser("search", help="run unexpanded queries")
    _add_data(p, queries=True)
    p.add_argument("--model", choices=("bm25",), default="bm25")
    p.add_argument("--cutoff", type=int, default=DEFAULT_CUTOFF)
    p.add_argument("--out", help="run file (default stdout)")
    p.set_defaults(fn=cmd_search)

    p = sub.add_parser("evaluate", help="per-query AP, MAP and paired t-tests of run files")
    _add_data(p, gt=True, queries=True)
    p.add_argument("--run", action="append", required=True, help="[name=]path, repeatable")
    p.add_argument("--out", help="per-query AP CSV (default stdout)")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a generator option")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("run", help="full pipeline from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p.set_defaults(fn=cmd_run)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"geostat {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusError, PipelineError, DegeneratePattern, FileNotFoundError, UnicodeDecodeError,
            json.JSONDecodeError, pickle.UnpicklingError) as exc:
        print(f"geostat {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"geostat {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
