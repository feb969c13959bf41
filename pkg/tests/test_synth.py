import numpy as np
import pytest

from riskscreen import corpus as C
from riskscreen import lexicons as L
from riskscreen import synth
from riskscreen.errors import ConfigurationError


class TestSpec:
    def test_defaults_match_study_shape(self):
        spec = synth.SynthSpec()
        recs = synth.generate(spec)
        assert len(recs) == 309
        assert all(len(r.text_answers) == 4 and len(r.mc_answers) == 5 for r in recs)

    def test_vocabulary_too_small(self):
        with pytest.raises(ConfigurationError):
            synth.SynthSpec(n_topics_true=5, vocabulary_size=9)

    @pytest.mark.parametrize("kw", [{"sentiment_rate": 1.5}, {"topic_concentration": 0}, {"n_respondents": 0}])
    def test_invalid(self, kw):
        with pytest.raises(ConfigurationError):
            synth.SynthSpec(**kw)

    def test_from_json_presets(self):
        assert synth.SynthSpec.from_json({"preset": "strong"}) == synth.SynthSpec.strong()
        assert synth.SynthSpec.from_json({"preset": "null", "seed": 4}).mood_loading == 0.0
        with pytest.raises(ConfigurationError):
            synth.SynthSpec.from_json({"preset": "loud"})
        with pytest.raises(ConfigurationError):
            synth.SynthSpec.from_json({"colour": 1})

    def test_json_round_trip(self):
        spec = synth.SynthSpec(seed=9, vocabulary_size=80)
        assert synth.SynthSpec.from_json(spec.to_json()) == spec


class TestGenerate:
    def test_byte_identical_output(self, tmp_path):
        spec = synth.SynthSpec(n_respondents=40, seed=5)
        C.write_corpus_jsonl(synth.generate(spec), tmp_path / "a.jsonl")
        C.write_corpus_jsonl(synth.generate(spec), tmp_path / "b.jsonl")
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()

    def test_seed_changes_output(self):
        a = synth.generate(synth.SynthSpec(n_respondents=5, seed=1))
        b = synth.generate(synth.SynthSpec(n_respondents=5, seed=2))
        assert a != b

    def test_output_loads_and_validates(self, tmp_path):
        recs = synth.generate(synth.SynthSpec(n_respondents=30, seed=3))
        C.write_corpus_jsonl(recs, tmp_path / "c.jsonl")
        assert C.load_corpus(tmp_path / "c.jsonl") == recs

    def test_epds_marginals(self):
        recs = synth.generate(synth.SynthSpec(n_respondents=500, seed=0))
        epds = np.array([r.epds_score for r in recs], dtype=float)
        assert abs(epds.mean() - 7.1) <= 1.0
        assert abs(epds.std(ddof=1) - 4.8) <= 1.0

    def test_topic_words_disjoint_from_lexicons(self):
        spec = synth.SynthSpec(n_topics_true=4, vocabulary_size=48)
        groups = synth.topic_words(spec)
        assert len(groups) == 4 and sum(map(len, groups)) == 48
        flat = [w for g in groups for w in g]
        assert len(set(flat)) == 48

    def test_strong_spec_carries_sentiment_signal(self):
        recs = synth.generate(synth.SynthSpec.strong(n_respondents=500, seed=0))
        lists = L.load_polarity_lists()
        neg = np.array([L.ol_features(C.preprocess(r), lists)[1] for r in recs])
        epds = np.array([r.epds_score for r in recs], dtype=float)
        assert abs(np.corrcoef(neg, epds)[0, 1]) > 0.5

    def test_null_spec_has_no_mc_signal(self):
        recs = synth.generate(synth.SynthSpec.null(n_respondents=500, seed=0))
        mood = np.array([r.mc_answers[0] for r in recs], dtype=float)
        epds = np.array([r.epds_score for r in recs], dtype=float)
        assert abs(np.corrcoef(mood, epds)[0, 1]) < 0.15

    def test_web_prevalence_is_moderate(self):
        recs = synth.generate(synth.SynthSpec(n_respondents=500, seed=0))
        rate = np.mean([max(r.web_items) >= 2 for r in recs])
        assert 0.05 < rate < 0.5
