"""Synthetic survey corpora with planted topics and a known latent risk.

Each respondent gets a standard-normal latent risk ``r``. Screening scores,
closed-form answers and the rate of negative vs. positive polarity words all
load on ``r``; journal text is otherwise drawn from planted topics whose word
groups are disjoint. Defaults follow the marginals of the original survey
(EPDS mean 7.1, sd 4.8; mood mean 2.6).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .corpus import (
    COHORTS,
    EPDS_ITEM10_RANGE,
    EPDS_RANGE,
    MC_RANGES,
    SurveyRecord,
    data_path,
    get_stemmer,
    load_stopwords,
    read_word_list,
)
from .errors import ConfigurationError

_MC_MEANS = (2.6, 0.5, 1.5, 6.2, 1.6)

_ONSETS = ("b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z",
           "br", "dr", "gr", "kr", "pl", "st", "tr")
_VOWELS = ("a", "o", "u", "i")
_CODAS = ("", "", "k", "m", "n", "p", "t", "x")

# filler that tokenizes away (stopwords), only to make the text look like prose
_FILLER = ("i", "the", "was", "and", "my", "it", "to", "a", "of", "with", "so", "this")


@dataclass(frozen=True)
class SynthSpec:
    n_respondents: int = 309
    n_topics_true: int = 3
    vocabulary_size: int = 60
    topic_concentration: float = 0.5
    doc_topic_concentration: float = 0.1
    mean_text_length: float = 15.0
    filler_rate: float = 0.3
    sentiment_rate: float = 0.1
    sentiment_loading: float = 1.0
    epds_mean: float = 7.0
    epds_loading: float = 5.0
    epds_noise: float = 1.0
    mood_loading: float = -0.9
    conflict_loading: float = 0.4
    energy_loading: float = -0.5
    sleep_hours_loading: float = -0.8
    sleep_quality_loading: float = -0.4
    mc_noise: float = 0.5
    aggression_risk_corr: float = 0.3
    conflict_aggression_loading: float = 0.5
    web_base: float = -0.45
    web_loading: float = 0.9
    web_noise: float = 0.5
    pregnant_share: float = 178 / 309
    seed: int = 0

    def __post_init__(self):
        if self.n_respondents < 1:
            raise ConfigurationError("n_respondents must be >= 1")
        if self.n_topics_true < 1:
            raise ConfigurationError("n_topics_true must be >= 1")
        if self.vocabulary_size < 2 * self.n_topics_true:
            raise ConfigurationError(
                f"vocabulary_size {self.vocabulary_size} is smaller than 2 * n_topics_true"
            )
        if self.topic_concentration <= 0 or self.doc_topic_concentration <= 0:
            raise ConfigurationError("Dirichlet concentrations must be positive")
        if self.mean_text_length < 1:
            raise ConfigurationError("mean_text_length must be >= 1")
        for name in ("sentiment_rate", "filler_rate", "pregnant_share"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigurationError(f"{name} must lie in [0, 1]")
        if not -1 <= self.aggression_risk_corr <= 1:
            raise ConfigurationError("aggression_risk_corr must lie in [-1, 1]")

    @classmethod
    def strong(cls, **overrides) -> "SynthSpec":
        """Clear sentiment and closed-form signal."""
        return cls(**{"sentiment_rate": 0.2, "sentiment_loading": 2.0, **overrides})

    @classmethod
    def null(cls, **overrides) -> "SynthSpec":
        """No feature carries information about the outcomes."""
        base = dict(
            sentiment_loading=0.0,
            mood_loading=0.0,
            conflict_loading=0.0,
            energy_loading=0.0,
            sleep_hours_loading=0.0,
            sleep_quality_loading=0.0,
            conflict_aggression_loading=0.0,
        )
        return cls(**{**base, **overrides})

    @classmethod
    def from_json(cls, obj: dict) -> "SynthSpec":
        obj = dict(obj)
        preset = obj.pop("preset", "default")
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigurationError(f"unknown synth spec keys: {sorted(unknown)}")
        factory = {"default": cls, "strong": cls.strong, "null": cls.null}.get(preset)
        if factory is None:
            raise ConfigurationError(f"unknown preset {preset!r} (default, strong, null)")
        return factory(**obj)

    def to_json(self) -> dict:
        return asdict(self)


def _pseudo_words(n: int, rng: np.random.Generator, exclude: set[str]) -> list[str]:
    """Pronounceable nonsense words that survive tokenizing and stemming unchanged."""
    stem = get_stemmer("porter2")
    out: list[str] = []
    seen = set(exclude)
    while len(out) < n:
        syllables = int(rng.integers(2, 4))
        w = "".join(
            _ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))]
            for _ in range(syllables)
        ) + _CODAS[rng.integers(len(_CODAS))]
        if w in seen or stem(w) != w or stem(w) in seen:
            continue
        seen.add(w)
        out.append(w)
    return out


def topic_words(spec: SynthSpec) -> list[list[str]]:
    """The planted word group of every true topic."""
    rng = np.random.default_rng([spec.seed, 1])
    exclude = set(load_stopwords())
    for f in ("ol_positive.txt", "ol_negative.txt"):
        exclude |= {get_stemmer("porter2")(w) for w in read_word_list(data_path(f))}
    words = _pseudo_words(spec.vocabulary_size, rng, exclude)
    return [list(g) for g in np.array_split(np.array(words, dtype=object), spec.n_topics_true)]


def _clamp_round(x: float, lo: int, hi: int) -> int:
    return int(min(max(round(x), lo), hi))


def _sigmoid(x: float) -> float:
    return 1.0 / (1.0 + np.exp(-x))


def generate(spec: SynthSpec) -> list[SurveyRecord]:
    """Draw ``spec.n_respondents`` records; identical specs give identical output."""
    groups = topic_words(spec)
    positive = read_word_list(data_path("ol_positive.txt"))
    negative = read_word_list(data_path("ol_negative.txt"))
    rng = np.random.default_rng([spec.seed, 2])
    word_probs = [rng.dirichlet(np.full(len(g), spec.topic_concentration)) for g in groups]
    loadings = (spec.mood_loading, spec.conflict_loading, spec.energy_loading,
                spec.sleep_hours_loading, spec.sleep_quality_loading)
    width = len(str(spec.n_respondents))
    corr = spec.aggression_risk_corr

    records = []
    for i in range(spec.n_respondents):
        r = rng.standard_normal()
        aggression = corr * r + np.sqrt(1 - corr**2) * rng.standard_normal()
        theta = rng.dirichlet(np.full(spec.n_topics_true, spec.doc_topic_concentration))
        p_neg = spec.sentiment_rate * _sigmoid(spec.sentiment_loading * r)
        p_pos = spec.sentiment_rate - p_neg

        texts = []
        for _ in range(4):
            length = 1 + rng.poisson(spec.mean_text_length - 1)
            words = []
            for _ in range(length):
                if rng.random() < spec.filler_rate:
                    words.append(_FILLER[rng.integers(len(_FILLER))])
                u = rng.random()
                if u < p_neg:
                    words.append(negative[rng.integers(len(negative))])
                elif u < p_neg + p_pos:
                    words.append(positive[rng.integers(len(positive))])
                else:
                    z = rng.choice(spec.n_topics_true, p=theta)
                    words.append(groups[z][rng.choice(len(groups[z]), p=word_probs[z])])
            texts.append(" ".join(words).capitalize() + ".")

        mc = []
        for j, (mean, load) in enumerate(zip(_MC_MEANS, loadings)):
            latent = mean + load * r + spec.mc_noise * rng.standard_normal()
            if j == 1:
                latent += spec.conflict_aggression_loading * aggression
            mc.append(_clamp_round(latent, *MC_RANGES[j]))
        epds = _clamp_round(
            spec.epds_mean + spec.epds_loading * r + spec.epds_noise * rng.standard_normal(),
            *EPDS_RANGE,
        )
        item10 = _clamp_round(-0.3 + 0.35 * r + 0.4 * rng.standard_normal(), *EPDS_ITEM10_RANGE)
        web = tuple(
            _clamp_round(spec.web_base + spec.web_loading * aggression + spec.web_noise * rng.standard_normal(), 0, 3)
            for _ in range(3)
        )
        cohort = COHORTS[0] if rng.random() < spec.pregnant_share else COHORTS[1]
        records.append(
            SurveyRecord(f"r{i:0{width}d}", tuple(texts), tuple(mc), epds, item10, web, cohort)
        )
    return records


def load_spec(path: str | Path) -> SynthSpec:
    return SynthSpec.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def with_seed(spec: SynthSpec, seed: int) -> SynthSpec:
    return replace(spec, seed=seed)
