import hashlib
import json
from dataclasses import replace

import numpy as np
import pytest

from riskscreen import cli, pipeline, synth
from riskscreen._rng import derive_seed
from riskscreen.corpus import write_corpus_jsonl
from riskscreen.errors import ConfigurationError, ValidationError
from riskscreen.features import FEATURE_SETS, make_split

SMALL = {
    "corpus": "corpus.jsonl",
    "topics": {"k_min": 2, "k_max": 3, "n_iterations": 60, "burn_in": 30},
    "lasso": {"n_replicates": 3, "n_lambdas": 20},
}


def _setup(root, records=None, **over):
    root.mkdir(parents=True, exist_ok=True)
    records = records if records is not None else synth.generate(synth.SynthSpec.strong(n_respondents=60, seed=3))
    write_corpus_jsonl(records, root / "corpus.jsonl")
    cfg = {**SMALL, **over}
    (root / "cfg.json").write_text(json.dumps(cfg), encoding="utf-8")
    return root / "cfg.json"


def _tree_digest(root):
    h = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h[str(p.relative_to(root))] = hashlib.sha256(p.read_bytes()).hexdigest()
    return h


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    cfg = _setup(root)
    assert cli.main(["run", "--config", str(cfg), "--out", str(root / "out")]) == 0
    return root


class TestConfig:
    def test_unknown_keys(self):
        with pytest.raises(ConfigurationError):
            pipeline.ExperimentConfig.from_dict({"colour": 1})
        with pytest.raises(ConfigurationError):
            pipeline.ExperimentConfig.from_dict({"lasso": {"alpha": 1}})

    def test_relative_paths_resolve_against_config(self, tmp_path):
        cfg = pipeline.load_config(_setup(tmp_path))
        assert cfg.corpus == str(tmp_path / "corpus.jsonl")

    def test_hash_ignores_output_location_and_threads(self):
        a = pipeline.ExperimentConfig()
        assert a.config_hash() == replace(a, out_dir="elsewhere", threads=4).config_hash()
        assert a.config_hash() != replace(a, seed=1).config_hash()

    def test_bad_json(self, tmp_path):
        (tmp_path / "c.json").write_text("{", encoding="utf-8")
        with pytest.raises(ValidationError, match="invalid JSON"):
            pipeline.load_config(tmp_path / "c.json")

    @pytest.mark.parametrize("kw", [{"feature_sets": ["words"]}, {"outcomes": []}, {"seed": -1},
                                    {"threads": 0}])
    def test_invalid(self, kw):
        with pytest.raises(ConfigurationError):
            pipeline.ExperimentConfig(**kw)


class TestStages:
    def test_preprocess_rows(self, tmp_path):
        records = synth.generate(synth.SynthSpec(seed=2))
        cfg = _setup(tmp_path, records)
        assert cli.main(["preprocess", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
        docs = pipeline.load_documents(tmp_path / "o")
        assert len(docs) == 309
        _, dtm = pipeline.load_dtm(tmp_path / "o")
        assert dtm.n_docs == 309

    def test_singleton_k_range(self, tmp_path):
        cfg = _setup(tmp_path, topics={"k_min": 2, "k_max": 2, "n_iterations": 40, "burn_in": 20})
        out = str(tmp_path / "o")
        assert cli.main(["preprocess", "--config", str(cfg), "--out", out]) == 0
        assert cli.main(["topics", "--config", str(cfg), "--out", out]) == 0
        lines = [l for l in (tmp_path / "o/topics/coherence.csv").read_text().splitlines() if not l.startswith("#")]
        assert len(lines) == 2 and lines[1].startswith("2,")

    def test_forced_k(self, tmp_path):
        cfg = _setup(tmp_path, topics={"force_k": 4, "n_iterations": 40, "burn_in": 20})
        c = pipeline.load_config(cfg)
        c = replace(c, out_dir=str(tmp_path / "o"))
        pipeline.run_preprocess(c)
        report, model, _ = pipeline.run_topics(c)
        assert report.best_k == 4 and model.k == 4
        assert len(report.entries) == 1

    def test_missing_lexicon_fails_before_compute(self, tmp_path):
        cfg = _setup(tmp_path, lexicons={"liwc": "nope.dic"})
        out = tmp_path / "o"
        assert cli.main(["run", "--config", str(cfg), "--out", str(out)]) == 2
        assert not out.exists()

    def test_empty_corpus_exit_code(self, tmp_path):
        cfg = _setup(tmp_path, [])
        assert cli.main(["preprocess", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2

    def test_no_test_positives_is_reported_and_run_continues(self, tmp_path):
        records = synth.generate(synth.SynthSpec.strong(n_respondents=60, seed=3))
        split = make_split(60, 0.2, derive_seed(0, 2))
        test = set(split.test.tolist())
        records = [replace(r, web_items=(0, 0, 0)) if i in test else r for i, r in enumerate(records)]
        assert any(max(r.web_items) >= 2 for r in records)
        cfg = _setup(tmp_path, records, feature_sets=["sentiment", "multiple_choice"])
        out = tmp_path / "o"
        assert cli.main(["run", "--config", str(cfg), "--out", str(out)]) == 0
        cells = json.loads((out / "metrics.json").read_text())["cells"]
        assert len(cells) == 4
        web = [c for c in cells if c["outcome"] == "web"]
        assert all(c["test_auc"] is None and any(e.startswith("test_auc") for e in c["errors"]) for c in web)
        assert all(c["cv_r2_mean"] is not None for c in web)
        assert all(c["test_auc"] is not None for c in cells if c["outcome"] == "epds")

    def test_stage_out_of_order(self, tmp_path):
        cfg = _setup(tmp_path)
        assert cli.main(["train-eval", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


class TestFullRun:
    def test_feature_files(self, full_run):
        feats = full_run / "out" / "features"
        assert sorted(p.stem for p in feats.glob("*.csv")) == sorted([*FEATURE_SETS, "labels"])

    def test_fourteen_cells(self, full_run):
        metrics = json.loads((full_run / "out/metrics.json").read_text())
        assert len(metrics["cells"]) == 14
        assert {(c["feature_set"], c["outcome"]) for c in metrics["cells"]} == {
            (s, o) for s in FEATURE_SETS for o in ("epds", "web")
        }

    def test_column_counts_add_up(self, full_run):
        metrics = json.loads((full_run / "out/metrics.json").read_text())
        n = {c["feature_set"]: c["n_features"] for c in metrics["cells"] if c["outcome"] == "epds"}
        assert n["sentiment"] == 4 and n["multiple_choice"] == 5
        assert n["all_nlp"] == n["sentiment"] + n["liwc"] + n["lda"] + n["lsi"]
        assert n["all_features"] == n["all_nlp"] + 5

    def test_provenance_everywhere(self, full_run):
        cfg = pipeline.load_config(full_run / "cfg.json")
        h = cfg.config_hash()
        for p in (full_run / "out").rglob("*"):
            if not p.is_file():
                continue
            text = p.read_text(encoding="utf-8")
            if p.suffix == ".json":
                assert json.loads(text)["provenance"]["config_hash"] == h, p
            else:
                assert f"config_hash={h}" in text.splitlines()[0], p

    def test_report(self, full_run):
        table = (full_run / "out/report/table.md").read_text()
        assert table.count("\n| ") >= 15
        assert len(list((full_run / "out/report").glob("*.svg"))) == 14

    def test_model_json(self, full_run):
        m = json.loads((full_run / "out/models/multiple_choice__epds.json").read_text())
        assert set(m["coefficients"]) == {"mood", "conflict", "energy", "sleep_hours", "sleep_quality"}
        assert len(m["seeds"]["replicates"]) == 3
        assert all(0 <= v <= 1 for v in m["selection_frequency"].values())

    def test_byte_identical_rerun(self, full_run, tmp_path):
        out = tmp_path / "again"
        assert cli.main(["run", "--config", str(full_run / "cfg.json"), "--out", str(out)]) == 0
        assert _tree_digest(out) == _tree_digest(full_run / "out")

    def test_stage_resume(self, full_run, tmp_path):
        # rerunning only train-eval on a copy reproduces the same metrics
        import shutil
        out = tmp_path / "copy"
        shutil.copytree(full_run / "out", out)
        (out / "metrics.json").unlink()
        shutil.rmtree(out / "models")
        assert cli.main(["train-eval", "--config", str(full_run / "cfg.json"), "--out", str(out)]) == 0
        assert (out / "metrics.json").read_bytes() == (full_run / "out/metrics.json").read_bytes()


class TestCli:
    def test_synth_is_deterministic(self, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        assert cli.main(["synth", "--seed", "5", "--out", str(a)]) == 0
        assert cli.main(["--seed", "5", "synth", "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_synth_csv_and_spec(self, tmp_path):
        (tmp_path / "s.json").write_text(json.dumps({"preset": "null", "n_respondents": 12}))
        out = tmp_path / "c.csv"
        assert cli.main(["synth", "--spec", str(tmp_path / "s.json"), "--out", str(out)]) == 0
        assert out.read_text().startswith('"id",')

    def test_bad_synth_spec(self, tmp_path):
        (tmp_path / "s.json").write_text(json.dumps({"vocabulary_size": 1}))
        assert cli.main(["synth", "--spec", str(tmp_path / "s.json"), "--out", str(tmp_path / "c.jsonl")]) == 2

    def test_bad_seed(self):
        with pytest.raises(SystemExit):
            cli.main(["synth", "--seed", "-3"])

    def test_threads_do_not_change_output(self, full_run, tmp_path):
        out = tmp_path / "t"
        assert cli.main(["run", "--config", str(full_run / "cfg.json"), "--out", str(out), "--threads", "2"]) == 0
        assert _tree_digest(out) == _tree_digest(full_run / "out")
