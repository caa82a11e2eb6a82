import csv
import json
from collections import Counter

import numpy as np
import pytest

from geostat.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from geostat.corpus import Corpus, parse_corpus
from geostat.geo import TileIndex, assign_tile
from geostat.pipeline import PipelineConfig, PipelineError, load_config, parse_config_text, run_pipeline, \
    split_queries
from geostat.pointpattern import ATTRACTION, classify_interaction
from geostat.spatial_features import SpatialProfiler
from geostat.synth import SynthConfig, generate

TINY = dict(tiles=2, events=8, background_pictures=600, train_queries=4)


@pytest.fixture(scope="module")
def data(tmp_path_factory, small_synth):
    d = tmp_path_factory.mktemp("data")
    paths = small_synth.write(d)
    return {k: str(v) for k, v in paths.items()}


def data_args(data, gt=False, queries=True):
    args = ["--corpus", data["corpus"]]
    if gt:
        args += ["--groundtruth", data["groundtruth"]]
    if queries:
        args += ["--queries", data["queries"]]
    return args


class TestSynth:
    def test_bit_identical(self, tmp_path):
        a = generate(SynthConfig(seed=5, **TINY)).write(tmp_path / "a")
        b = generate(SynthConfig(seed=5, **TINY)).write(tmp_path / "b")
        for k in a:
            assert a[k].read_bytes() == b[k].read_bytes()

    def test_seed_matters(self):
        assert generate(SynthConfig(seed=1, **TINY)).pictures != generate(SynthConfig(seed=2, **TINY)).pictures

    def test_zero_events(self):
        sc = generate(SynthConfig(seed=0, tiles=1, events=0, background_pictures=50))
        assert len(sc.pictures) == 50 and len(sc.ground_truth) == 0 and sc.queries == []

    def test_queries_and_split(self, small_synth):
        train, test = split_queries(small_synth.queries)
        assert len(train) == 10 and len(test) == 6
        assert not {q.id for q in train} & {q.id for q in test}
        for q in small_synth.queries:
            assert small_synth.ground_truth.relevant(q.event_id)

    def test_bad_config(self):
        with pytest.raises(ValueError):
            SynthConfig(cluster_radius_km=0)
        with pytest.raises(ValueError):
            SynthConfig(events=-1)

    def test_event_tag_attracts_cotag(self):
        hits = 0
        for seed in range(20):
            sc = generate(SynthConfig(seed=seed, tiles=2, events=6, background_pictures=800, train_queries=3))
            c = Corpus(sc.pictures)
            tiles = TileIndex.build(c, 0)
            geo = [c.pictures[i] for i in c.postings("evt0") if c.pictures[i].geotagged]
            tid = Counter(assign_tile(p.lat, p.lon) for p in geo).most_common(1)[0][0]
            prof = SpatialProfiler(c, tiles, n_sims=99, seed=seed, cross_null="toroidal")
            d = prof.cross_profile(tid, prof.pictures(tid, ["evt0"]), prof.pictures(tid, ["evt0k0"]), "x")
            hits += classify_interaction(d)[1] == ATTRACTION
        assert hits >= 18


class TestConfig:
    def test_parse(self):
        assert parse_config_text("# c\nfbdocs = 40\n\nn-sims=9 # x\n") == {"fbdocs": "40", "n_sims": "9"}

    def test_bad_line(self):
        with pytest.raises(ValueError):
            parse_config_text("fbdocs 40")

    def test_load_types_and_paths(self, tmp_path):
        (tmp_path / "c.cfg").write_text("corpus = x.jsonl\nalpha = 0.3\ngrid = yes\n")
        cfg = load_config(tmp_path / "c.cfg", {"seed": 4})
        assert cfg.alpha == 0.3 and cfg.grid is True and cfg.seed == 4
        assert cfg.corpus == str(tmp_path / "x.jsonl")

    def test_unknown_key(self, tmp_path):
        (tmp_path / "c.cfg").write_text("bogus = 1\n")
        with pytest.raises(ValueError):
            load_config(tmp_path / "c.cfg")

    def test_defaults(self):
        cfg = PipelineConfig()
        assert (cfg.fbdocs, cfg.fbterms, cfg.alpha, cfg.beta, cfg.theta, cfg.n_sims) == (20, 15, 0.5, 0.4, 0.005, 99)


class TestPipeline:
    def test_missing_input_names_stage(self, tmp_path):
        with pytest.raises(PipelineError, match="ingest"):
            run_pipeline(PipelineConfig(corpus=str(tmp_path / "none.jsonl"), out=str(tmp_path / "o")))

    def test_grid_and_rerun(self, data, tmp_path):
        cfg = PipelineConfig(data["corpus"], data["groundtruth"], data["queries"], str(tmp_path / "a"),
                             systems="bm25,kl", grid=True, min_tile_pictures=0, n_sims=5)
        man = run_pipeline(cfg)
        assert len(man["results"]) == 30
        assert {(r["fbdocs"], r["fbterms"]) for r in man["results"]} == \
            {(k, n) for k in (20, 40, 60, 80, 100, 120) for n in (15, 25, 35, 45, 55)}
        assert len(man["runs"]) == 60
        cfg2 = PipelineConfig(**{**cfg.__dict__, "out": str(tmp_path / "b")})
        again = run_pipeline(cfg2)
        assert [r["map"] for r in again["results"]] == [r["map"] for r in man["results"]]
        assert again["corpus_hash"] == man["corpus_hash"]


class TestCli:
    def test_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["search"])
        assert exc.value.code == EXIT_USAGE

    def test_unknown_command(self):
        with pytest.raises(SystemExit) as exc:
            main(["nope"])
        assert exc.value.code == EXIT_USAGE

    def test_missing_file(self, tmp_path):
        assert main(["ingest", "--corpus", str(tmp_path / "none.jsonl")]) == EXIT_DATA

    def test_bad_ground_truth(self, data, tmp_path):
        bad = tmp_path / "gt.jsonl"
        bad.write_text(json.dumps({"event": "E", "pictures": ["unknown"]}) + "\n")
        assert main(["ingest", "--corpus", data["corpus"], "--groundtruth", str(bad)]) == EXIT_DATA

    def test_ingest(self, data, capsys):
        assert main(["ingest"] + data_args(data, gt=True)) == EXIT_OK
        summary = json.loads(capsys.readouterr().out)
        assert summary["pictures"] == len(parse_corpus(data["corpus"]).pictures)

    def test_search_evaluate(self, data, tmp_path, capsys):
        run = tmp_path / "bm25.txt"
        assert main(["search"] + data_args(data) + ["--split", "test", "--out", str(run)]) == EXIT_OK
        kl = tmp_path / "kl.txt"
        assert main(["expand"] + data_args(data) + ["--split", "test", "--mode", "kl", "--out", str(kl)]) == EXIT_OK
        out = tmp_path / "ap.csv"
        assert main(["evaluate"] + data_args(data, gt=True) + ["--split", "test", "--run", f"bm25={run}",
                                                                "--run", f"kl={kl}", "--out", str(out)]) == EXIT_OK
        rows = list(csv.reader(out.open()))
        assert rows[0][:3] == ["qid", "bm25", "kl"] and len(rows) == 7
        assert "system,MAP" in capsys.readouterr().out

    def test_expand_without_model_is_usage(self, data):
        assert main(["expand"] + data_args(data) + ["--mode", "kl_t"]) == EXIT_USAGE

    def test_kfn(self, data, tmp_path):
        out = tmp_path / "k.csv"
        assert main(["kfn", "--corpus", data["corpus"], "--tag", "evt0", "--cross", "evt0k0",
                     "--n-sims", "9", "--out", str(out)]) == EXIT_OK
        assert out.read_text().splitlines()[0] == "h,khat,lhat,dhat,var,lo,hi"

    def test_kfn_unknown_tag(self, data):
        assert main(["kfn", "--corpus", data["corpus"], "--tag", "zzzz", "--n-sims", "9"]) == EXIT_DATA

    def test_train_xval_featquality_expand(self, data, tmp_path):
        models = tmp_path / "m"
        common = ["--min-tile-pictures", "0", "--n-sims", "5"]
        assert main(["train"] + data_args(data, gt=True) + common + ["--n-trees", "10", "--train-size", "60",
                                                                     "--out", str(models)]) == EXIT_OK
        assert (models / "forest_t.pkl").exists() and (models / "training_st.csv").exists()
        assert main(["xval", "--training", str(models / "training_t.csv"), "--scheme", "3",
                     "--n-trees", "10", "--out", str(tmp_path / "x.csv")]) == EXIT_OK
        assert main(["featquality", "--training", str(models / "training_t.csv"), "--measure", "SU",
                     "--out", str(tmp_path / "f.csv")]) == EXIT_OK
        assert (tmp_path / "f.csv").read_text().startswith("rank,feature,SU")
        run = tmp_path / "st.txt"
        assert main(["expand"] + data_args(data) + common + ["--split", "test", "--mode", "kl_st",
                                                             "--model-dir", str(models), "--out", str(run)]) == 0
        assert len(run.read_text().splitlines()) > 0

    def test_features(self, data, tmp_path):
        out = tmp_path / "feat.csv"
        assert main(["features"] + data_args(data) + ["--split", "test", "--min-tile-pictures", "0",
                                                       "--n-sims", "5", "--fbdocs", "5", "--out", str(out)]) == 0
        header = out.read_text().splitlines()[0].split(",")
        assert "RDMD12_o1_s3" in header and "KURT1" in header and "DF3_Whole" in header

    def test_synth_and_run(self, tmp_path):
        d = tmp_path / "s"
        assert main(["synth", "--out", str(d), "--seed", "2", "--set", "tiles=2", "--set", "events=8",
                     "--set", "background_pictures=500", "--set", "train_queries=4"]) == EXIT_OK
        cfg = d / "run.cfg"
        cfg.write_text("corpus = corpus.jsonl\ngroundtruth = groundtruth.jsonl\nqueries = queries.jsonl\n"
                       "out = out\nsystems = bm25,kl,kl_zkyc\n")
        assert main(["run", "--config", str(cfg), "--set", "n_sims=5"]) == EXIT_OK
        man = json.loads((d / "out" / "manifest.json").read_text())
        assert set(man["results"][0]["map"]) == {"bm25", "kl", "kl_zkyc"}

    def test_synth_bad_option(self, tmp_path):
        assert main(["synth", "--out", str(tmp_path), "--set", "nope=1"]) in (EXIT_USAGE, EXIT_DATA)
