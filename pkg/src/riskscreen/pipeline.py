"""File-based pipeline stages behind the command line.

Every stage reads the artifacts of the previous one from the output
directory and writes its own, so stages can be rerun or inspected one at a
time::

    <out>/preprocess/  docs.csv  vocab.txt  dtm.csv
    <out>/topics/      coherence.csv  topics.csv  lda_gamma.csv  lsi.csv
                       lsi_singular_values.csv  summary.json
    <out>/features/    <feature_set>.csv  labels.csv  split.json
    <out>/models/      <set>__<outcome>.json  ..._coefficients.csv  ..._roc.csv
    <out>/metrics.json
    <out>/report/      table.md  <set>__<outcome>.svg

Each artifact carries the config hash, the base seed and the package
version. Nothing time- or machine-dependent is written, so two runs of one
config produce identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np
import scipy.sparse as sp

from . import __version__, _io
from . import corpus as corpus_mod
from . import lasso, lda, lexicons, lsi
from ._rng import derive_seed
from .errors import ConfigurationError, NumericalError, UndefinedMetricError, ValidationError
from .evaluation import auc, r_squared, roc_curve
from .features import (
    FEATURE_SETS,
    OUTCOMES,
    SET_FRAGMENTS,
    Fragment,
    Split,
    assemble,
    label,
    make_split,
    mc_features,
    read_feature_csv,
    write_feature_csv,
    zscore,
)

# stage tags for derive_seed
_SEED_LDA, _SEED_SPLIT, _SEED_LASSO = 1, 2, 3


@dataclass(frozen=True)
class LexiconPaths:
    """Lexicon files; ``None`` selects the small demo lexicon shipped with
    the package. ``swn_format`` is ``"tsv"`` (term, pos, neg) or
    ``"sentiwordnet"`` (the distributed SentiWordNet 3.0 file)."""

    swn: str | None = None
    swn_format: str = "tsv"
    ol_positive: str | None = None
    ol_negative: str | None = None
    liwc: str | None = None


@dataclass(frozen=True)
class PreprocessConfig:
    stemmer: str | None = "porter2"
    min_df: int = 2
    min_token_len: int = 2
    stopwords: str | None = None


@dataclass(frozen=True)
class TopicConfig:
    """``k_max`` is clipped to the vocabulary size. ``force_k`` skips the
    coherence sweep and fits that k directly."""

    k_min: int = 2
    k_max: int = 100
    top_m: int = 5
    n_iterations: int = 2000
    burn_in: int = 1000
    alpha: float | None = None
    beta: float = 0.1
    average_samples: bool = False
    force_k: int | None = None
    lsi_rank: int | str = "full"


@dataclass(frozen=True)
class LassoConfig:
    n_replicates: int = 100
    n_folds: int = 5
    n_lambdas: int = 100
    lambda_ratio: float = 1e-3
    tol: float = 1e-7
    max_iter: int = 100_000
    shared_lambda: bool = False


_SECTIONS = {
    "lexicons": LexiconPaths,
    "preprocess": PreprocessConfig,
    "topics": TopicConfig,
    "lasso": LassoConfig,
}

# settings that cannot change any output and so stay out of the hash
_UNHASHED = ("out_dir", "threads")


@dataclass(frozen=True)
class ExperimentConfig:
    corpus: str | None = None
    lexicons: LexiconPaths = field(default_factory=LexiconPaths)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    topics: TopicConfig = field(default_factory=TopicConfig)
    lasso: LassoConfig = field(default_factory=LassoConfig)
    test_fraction: float = 0.2
    feature_sets: tuple[str, ...] = FEATURE_SETS
    outcomes: tuple[str, ...] = OUTCOMES
    seed: int = 0
    out_dir: str = "riskscreen-out"
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "feature_sets", tuple(self.feature_sets))
        object.__setattr__(self, "outcomes", tuple(self.outcomes))
        bad = [s for s in self.feature_sets if s not in FEATURE_SETS]
        if bad or not self.feature_sets:
            raise ConfigurationError(f"feature_sets {list(self.feature_sets)}: choose from {FEATURE_SETS}")
        bad = [o for o in self.outcomes if o not in OUTCOMES]
        if bad or not self.outcomes:
            raise ConfigurationError(f"outcomes {list(self.outcomes)}: choose from {OUTCOMES}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigurationError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        if self.threads < 1:
            raise ConfigurationError("threads must be >= 1")
        if self.lexicons.swn_format not in ("tsv", "sentiwordnet"):
            raise ConfigurationError(f"lexicons.swn_format must be 'tsv' or 'sentiwordnet'")
        t = self.topics
        if t.force_k is None and not 2 <= t.k_min <= t.k_max:
            raise ConfigurationError(f"need 2 <= k_min <= k_max, got [{t.k_min}, {t.k_max}]")

    @classmethod
    def from_dict(cls, obj: dict, base_dir: str | Path | None = None) -> "ExperimentConfig":
        """Build from parsed JSON; relative paths resolve against ``base_dir``."""
        obj = dict(obj)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(obj) - known)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {unknown}")
        for name, kind in _SECTIONS.items():
            section = obj.get(name, {})
            if not isinstance(section, dict):
                raise ConfigurationError(f"config section {name!r} must be an object")
            sub_known = {f.name for f in fields(kind)}
            extra = sorted(set(section) - sub_known)
            if extra:
                raise ConfigurationError(f"unknown keys in {name!r}: {extra}")
            obj[name] = kind(**section)
        cfg = cls(**obj)
        return cfg.resolve_paths(base_dir) if base_dir is not None else cfg

    def resolve_paths(self, base_dir: str | Path) -> "ExperimentConfig":
        base = Path(base_dir)

        def fix(p):
            return None if p is None else str(base / p) if not Path(p).is_absolute() else p

        lex = self.lexicons
        return replace(
            self,
            corpus=fix(self.corpus),
            lexicons=replace(
                lex,
                swn=fix(lex.swn),
                ol_positive=fix(lex.ol_positive),
                ol_negative=fix(lex.ol_negative),
                liwc=fix(lex.liwc),
            ),
            preprocess=replace(self.preprocess, stopwords=fix(self.preprocess.stopwords)),
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["feature_sets"] = list(self.feature_sets)
        d["outcomes"] = list(self.outcomes)
        return d

    def config_hash(self) -> str:
        d = self.to_dict()
        for k in _UNHASHED:
            d.pop(k)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    def provenance(self) -> dict:
        return {"config_hash": self.config_hash(), "seed": self.seed, "version": __version__}

    @property
    def out(self) -> Path:
        return Path(self.out_dir)


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ValidationError(f"{path}: config file not found") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(obj, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    return ExperimentConfig.from_dict(obj, base_dir=path.parent)


def _require_file(path: str | None, what: str) -> None:
    if path is not None and not Path(path).is_file():
        raise ValidationError(f"{what}: file not found: {path}")


def validate_inputs(cfg: ExperimentConfig, corpus: bool = True, lexicons_: bool = True) -> None:
    """Check that every referenced input file exists."""
    if corpus:
        if cfg.corpus is None:
            raise ValidationError("no corpus configured (set 'corpus' in the config)")
        _require_file(cfg.corpus, "corpus")
    _require_file(cfg.preprocess.stopwords, "preprocess.stopwords")
    if lexicons_:
        lex = cfg.lexicons
        for name in ("swn", "ol_positive", "ol_negative", "liwc"):
            _require_file(getattr(lex, name), f"lexicons.{name}")


def _write_text(path: Path, lines: list[str], prov: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    head = _io.provenance_line(prov)
    path.write_text("\n".join([head, *lines]) + "\n", encoding="utf-8")


def _read_lines(path: Path) -> list[str]:
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ValidationError(f"{path}: missing (run the earlier pipeline stage first)") from None
    return [ln for ln in text.splitlines() if ln and not ln.startswith("#")]


def _read_csv(path: Path):
    if not path.is_file():
        raise ValidationError(f"{path}: missing (run the earlier pipeline stage first)")
    return _io.read_csv(path)


# -- preprocess -------------------------------------------------------------

def preprocess_options(cfg: ExperimentConfig) -> corpus_mod.PreprocessOptions:
    p = cfg.preprocess
    return corpus_mod.PreprocessOptions(
        stopwords=corpus_mod.load_stopwords(p.stopwords),
        stemmer=p.stemmer,
        min_token_len=p.min_token_len,
    )


def run_preprocess(cfg: ExperimentConfig):
    """Tokenize the corpus and write documents, vocabulary and counts."""
    validate_inputs(cfg, lexicons_=False)
    records = corpus_mod.load_corpus(cfg.corpus)
    if not records:
        raise corpus_mod.EmptyCorpusError(f"{cfg.corpus}: no records")
    opts = preprocess_options(cfg)
    docs = [corpus_mod.preprocess(r, opts) for r in records]
    vocab, dtm = corpus_mod.build_dtm(docs, cfg.preprocess.min_df)

    prov = cfg.provenance()
    out = cfg.out / "preprocess"
    _io.write_csv(
        out / "docs.csv",
        ["respondent_id", "raw_char_len", "tokens"],
        ([d.respondent_id, d.raw_char_len, " ".join(d.tokens)] for d in docs),
        prov,
    )
    _write_text(
        out / "vocab.txt",
        [f"{t}\t{int(df)}" for t, df in zip(vocab.terms, vocab.document_frequency)],
        prov,
    )
    coo = dtm.counts.tocoo()
    order = np.lexsort((coo.col, coo.row))
    _io.write_csv(
        out / "dtm.csv",
        ["respondent_id", "term", "count"],
        (
            [dtm.doc_ids[coo.row[i]], vocab.terms[coo.col[i]], int(coo.data[i])]
            for i in order
        ),
        prov,
    )
    return vocab, dtm


def load_documents(out_dir: Path) -> list[corpus_mod.Document]:
    _, rows = _read_csv(out_dir / "preprocess" / "docs.csv")
    return [corpus_mod.Document(r[0], tuple(r[2].split()), int(r[1])) for r in rows]


def load_dtm(out_dir: Path) -> tuple[corpus_mod.Vocabulary, corpus_mod.DocTermMatrix]:
    pre = out_dir / "preprocess"
    entries = [ln.split("\t") for ln in _read_lines(pre / "vocab.txt")]
    vocab = corpus_mod.Vocabulary(
        tuple(e[0] for e in entries), np.array([int(e[1]) for e in entries], dtype=np.int64)
    )
    ids = tuple(d.respondent_id for d in load_documents(out_dir))
    row_of = {rid: i for i, rid in enumerate(ids)}
    _, rows = _read_csv(pre / "dtm.csv")
    r = np.array([row_of[x[0]] for x in rows], dtype=np.int64)
    c = np.array([vocab.index(x[1]) for x in rows], dtype=np.int64)
    v = np.array([int(x[2]) for x in rows], dtype=np.int64)
    counts = sp.csr_matrix((v, (r, c)), shape=(len(ids), len(vocab)))
    return vocab, corpus_mod.DocTermMatrix(counts, ids)


# -- topics -----------------------------------------------------------------

def _lda_config(cfg: ExperimentConfig, k: int) -> lda.LdaConfig:
    t = cfg.topics
    return lda.LdaConfig(
        k=k,
        alpha=t.alpha,
        beta=t.beta,
        n_iterations=t.n_iterations,
        burn_in=t.burn_in,
        seed=derive_seed(cfg.seed, _SEED_LDA),
        average_samples=t.average_samples,
    )


def run_topics(cfg: ExperimentConfig):
    """Coherence sweep over k, the final LDA model and the LSI factorization."""
    vocab, dtm = load_dtm(cfg.out)
    t = cfg.topics
    base = _lda_config(cfg, max(t.force_k or t.k_min, 2))
    if t.force_k is not None:
        k = t.force_k
        model = lda.fit_lda(dtm, replace(base, k=k, seed=derive_seed(base.seed, k)))
        per_topic = lda.topic_coherence(model, dtm, t.top_m)
        report = lda.CoherenceReport([(k, float(np.mean(per_topic)), tuple(per_topic))], k)
    else:
        hi = min(t.k_max, dtm.n_terms)
        if hi < t.k_min:
            raise ConfigurationError(
                f"k range [{t.k_min}, {t.k_max}] is empty for a vocabulary of {dtm.n_terms} terms"
            )
        report = lda.select_k(dtm, (t.k_min, hi), base, t.top_m, cfg.threads)
        # same derived seed as the sweep, so this reproduces the selected fit
        k = report.best_k
        model = lda.fit_lda(dtm, replace(base, k=k, seed=derive_seed(base.seed, k)))
    coherence = lda.topic_coherence(model, dtm, t.top_m)
    lsi_model = lsi.fit_lsi(dtm, t.lsi_rank)

    prov = cfg.provenance()
    out = cfg.out / "topics"
    _io.write_csv(out / "coherence.csv", ["k", "mean_coherence"],
                  ([k_, mean] for k_, mean, *_ in report.entries), prov)
    n_top = min(8, dtm.n_terms)
    _io.write_csv(
        out / "topics.csv",
        ["k_index", "coherence", *(f"term_{i + 1}" for i in range(n_top))],
        (
            [z + 1, coherence[z], *(vocab.term(j) for j in model.top_terms(z, n_top))]
            for z in range(model.k)
        ),
        prov,
    )
    _write_fragment(out / "lda_gamma.csv", lda.lda_features(model), prov)
    _write_fragment(out / "lsi.csv", lsi.lsi_features(lsi_model), prov)
    _io.write_csv(out / "lsi_singular_values.csv", ["concept", "singular_value"],
                  ([i + 1, s] for i, s in enumerate(lsi_model.singular_values)), prov)
    _io.write_json(out / "summary.json", {
        "best_k": k,
        "k_range": [k, k] if t.force_k is not None else [t.k_min, min(t.k_max, dtm.n_terms)],
        "forced": t.force_k is not None,
        "perplexity": lda.perplexity(model, dtm),
        "lda_seed": derive_seed(base.seed, k),
        "lsi_rank": lsi_model.rank,
        "provenance": prov,
    })
    return report, model, lsi_model


def _write_fragment(path: Path, frag: Fragment, prov: dict) -> None:
    _io.write_csv(
        path,
        ["respondent_id", *frag.columns],
        ([rid, *vals] for rid, vals in zip(frag.row_ids, frag.values.tolist())),
        prov,
    )


def _read_fragment(path: Path, name: str) -> Fragment:
    m = read_feature_csv(_ensure(path))
    return Fragment(name, m.columns, m.values, m.row_ids)


def _ensure(path: Path) -> Path:
    if not path.is_file():
        raise ValidationError(f"{path}: missing (run the earlier pipeline stage first)")
    return path


# -- featurize --------------------------------------------------------------

def _load_lexicons(cfg: ExperimentConfig):
    lex = cfg.lexicons
    stem = cfg.preprocess.stemmer
    if lex.swn_format == "sentiwordnet":
        if lex.swn is None:
            raise ValidationError("lexicons.swn_format 'sentiwordnet' needs lexicons.swn")
        scored = lexicons.load_sentiwordnet(lex.swn, stem)
    else:
        scored = lexicons.load_scored_lexicon(lex.swn, stem)
    lists = lexicons.load_polarity_lists(lex.ol_positive, lex.ol_negative, stem)
    return scored, lists


def run_featurize(cfg: ExperimentConfig) -> dict[str, Any]:
    """Write one raw feature CSV per configured set, the labels and the split."""
    validate_inputs(cfg)
    needed = {f for s in cfg.feature_sets for f in SET_FRAGMENTS[s]}
    records = corpus_mod.load_corpus(cfg.corpus)
    ids = tuple(r.respondent_id for r in records)

    fragments: dict[str, Fragment] = {}
    if "mc" in needed:
        fragments["mc"] = mc_features(records)
    if needed & {"sentiment", "liwc"}:
        docs = load_documents(cfg.out)
        if tuple(d.respondent_id for d in docs) != ids:
            raise ValidationError("preprocessed documents do not match the corpus; rerun preprocess")
        if "sentiment" in needed:
            fragments["sentiment"] = lexicons.sentiment_fragment(docs, *_load_lexicons(cfg))
        if "liwc" in needed:
            dic = lexicons.load_category_dictionary(cfg.lexicons.liwc, cfg.preprocess.stemmer)
            fragments["liwc"] = lexicons.liwc_fragment(docs, dic)
    if "lda" in needed:
        fragments["lda"] = _read_fragment(cfg.out / "topics" / "lda_gamma.csv", "lda")
    if "lsi" in needed:
        fragments["lsi"] = _read_fragment(cfg.out / "topics" / "lsi.csv", "lsi")

    prov = cfg.provenance()
    out = cfg.out / "features"
    matrices = {}
    for s in cfg.feature_sets:
        m = assemble(fragments, s)
        if m.row_ids != ids:
            raise ValidationError(f"feature set {s!r}: rows do not match the corpus order")
        write_feature_csv(out / f"{s}.csv", m, prov)
        matrices[s] = m

    labels = {o: label(records, o) for o in OUTCOMES}
    _io.write_csv(
        out / "labels.csv",
        ["respondent_id", *(f"{o}{suffix}" for o in OUTCOMES for suffix in ("", "_positive"))],
        (
            [rid, *(v for o in OUTCOMES for v in (labels[o].continuous[i], int(labels[o].binary[i])))]
            for i, rid in enumerate(ids)
        ),
        prov,
    )
    split = make_split(len(records), cfg.test_fraction, derive_seed(cfg.seed, _SEED_SPLIT))
    _io.write_json(out / "split.json", {**split.to_json(), "provenance": prov})
    return {"matrices": matrices, "labels": labels, "split": split}


def load_labels(out_dir: Path) -> dict[str, tuple[np.ndarray, np.ndarray, tuple[str, ...]]]:
    header, rows = _read_csv(out_dir / "features" / "labels.csv")
    ids = tuple(r[0] for r in rows)
    out = {}
    for o in OUTCOMES:
        cont = np.array([float(r[header.index(o)]) for r in rows])
        binary = np.array([r[header.index(f"{o}_positive")] == "1" for r in rows])
        out[o] = (cont, binary, ids)
    return out


def load_split(out_dir: Path) -> Split:
    path = _ensure(out_dir / "features" / "split.json")
    return Split.from_json(_io.read_json(path))


# -- train/eval -------------------------------------------------------------

def cell_name(feature_set: str, outcome: str) -> str:
    return f"{feature_set}__{outcome}"


def _mean_sd(values) -> tuple[float | None, float | None]:
    v = [x for x in values if x is not None]
    if not v:
        return None, None
    return float(np.mean(v)), float(np.std(v, ddof=1)) if len(v) > 1 else 0.0


def _train_cell(cfg: ExperimentConfig, feature_set: str, outcome: str, labels, split) -> dict:
    """Fit, evaluate and persist one (feature set, outcome) cell."""
    prov = cfg.provenance()
    name = cell_name(feature_set, outcome)
    si, oi = FEATURE_SETS.index(feature_set), OUTCOMES.index(outcome)
    cell_seed = derive_seed(cfg.seed, _SEED_LASSO, si, oi)
    row: dict[str, Any] = {
        "feature_set": feature_set, "outcome": outcome,
        "cv_r2_mean": None, "cv_r2_sd": None, "cv_auc_mean": None, "cv_auc_sd": None,
        "test_r2": None, "test_auc": None, "n_features": None, "seed": cell_seed, "errors": [],
    }
    matrix = read_feature_csv(_ensure(cfg.out / "features" / f"{feature_set}.csv"))
    y, positive, ids = labels[outcome]
    if matrix.row_ids != ids:
        raise ValidationError(f"{feature_set}.csv rows do not match labels.csv")
    scaled = zscore(matrix, split)
    row["n_features"] = len(matrix.columns)
    x_tr, x_te = scaled.values[split.train], scaled.values[split.test]
    y_tr, y_te = y[split.train], y[split.test]
    pos_tr, pos_te = positive[split.train], positive[split.test]

    train_labels = pos_tr if 0 < pos_tr.sum() < pos_tr.size else None
    if train_labels is None:
        row["errors"].append("cv_auc: only one class among training labels")
    lc = cfg.lasso
    try:
        runs, avg = lasso.cv_replicates(
            x_tr, y_tr, train_labels,
            n_replicates=lc.n_replicates, n_folds=lc.n_folds, seed=cell_seed,
            names=matrix.columns, n_lambdas=lc.n_lambdas, lambda_ratio=lc.lambda_ratio,
            tol=lc.tol, max_iter=lc.max_iter, shared_lambda=lc.shared_lambda,
        )
    except (NumericalError, ValidationError) as exc:
        row["errors"].append(f"fit: {exc}")
        return row

    row["cv_r2_mean"], row["cv_r2_sd"] = _mean_sd(r.r2 for r in runs)
    if train_labels is not None:
        row["cv_auc_mean"], row["cv_auc_sd"] = _mean_sd(r.auc for r in runs)
    pred = lasso.predict(avg, x_te)
    try:
        row["test_r2"] = r_squared(pred, y_te)
    except UndefinedMetricError as exc:
        row["errors"].append(f"test_r2: {exc}")
    roc = None
    try:
        roc = roc_curve(pred, pos_te)
        row["test_auc"] = auc(pred, pos_te)
    except UndefinedMetricError as exc:
        row["errors"].append(f"test_auc: {exc}")

    out = cfg.out / "models"
    lambdas = avg.lambdas
    _io.write_json(out / f"{name}.json", {
        "outcome": outcome,
        "feature_set": feature_set,
        "intercept": avg.intercept,
        "coefficients": dict(zip(avg.names, avg.coefficients.tolist())),
        "selection_frequency": dict(zip(avg.names, avg.selection_frequency.tolist())),
        "lambda_summary": {
            "min": float(lambdas.min()), "median": float(np.median(lambdas)),
            "max": float(lambdas.max()), "rule": "shared" if lc.shared_lambda else "min_cv_error",
        },
        "seeds": {"base": cfg.seed, "cell": cell_seed, "replicates": [r.seed for r in runs]},
        "provenance": prov,
    })
    order = sorted(range(len(avg.names)), key=lambda j: (-abs(avg.coefficients[j]), avg.names[j]))
    freq_rank = {
        j: i + 1
        for i, j in enumerate(
            sorted(range(len(avg.names)), key=lambda j: (-avg.selection_frequency[j], avg.names[j]))
        )
    }
    _io.write_csv(
        out / f"{name}_coefficients.csv",
        ["feature", "mean_coefficient", "selection_frequency", "rank_by_coefficient", "rank_by_frequency"],
        (
            [avg.names[j], avg.coefficients[j], avg.selection_frequency[j], i + 1, freq_rank[j]]
            for i, j in enumerate(order)
        ),
        prov,
    )
    if roc is not None:
        _io.write_csv(
            out / f"{name}_roc.csv", ["threshold", "fpr", "tpr"],
            zip(roc.thresholds.tolist(), roc.fpr.tolist(), roc.tpr.tolist()), prov,
        )
    return row


def run_train_eval(cfg: ExperimentConfig) -> dict:
    """Train every (feature set, outcome) cell and write ``metrics.json``.

    A cell whose metric is undefined (e.g. no positives in the test split)
    records the error and the remaining cells still run.
    """
    labels = load_labels(cfg.out)
    split = load_split(cfg.out)
    cells = [(s, o) for o in cfg.outcomes for s in cfg.feature_sets]

    def one(cell):
        return _train_cell(cfg, *cell, labels, split)

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            rows = list(pool.map(one, cells))
    else:
        rows = [one(c) for c in cells]
    for r in rows:
        for e in r["errors"]:
            print(f"warning: {cell_name(r['feature_set'], r['outcome'])}: {e}", file=sys.stderr)
    metrics = {"cells": rows, "provenance": cfg.provenance(), "split_seed": split.seed}
    _io.write_json(cfg.out / "metrics.json", metrics)
    return metrics


# -- report -----------------------------------------------------------------

_SET_LABELS = {
    "sentiment": "Pos, neg affect",
    "liwc": "LIWC",
    "lda": "LDA topics",
    "lsi": "LSI",
    "all_nlp": "All NLP",
    "multiple_choice": "Multiple choice",
    "all_features": "All features",
}
_OUTCOME_LABELS = {"epds": "EPDS score", "web": "WEB score"}


def _cell(v, digits=2) -> str:
    return "n/a" if v is None else f"{v:.{digits}f}"


def metrics_table(metrics: dict) -> str:
    lines = [
        "| Outcome | Features | CV R² (sd) | CV AUC (sd) | Test R² | Test AUC |",
        "|---|---|---|---|---|---|",
    ]
    for r in metrics["cells"]:
        lines.append(
            f"| {_OUTCOME_LABELS[r['outcome']]} | {_SET_LABELS[r['feature_set']]} "
            f"| {_cell(r['cv_r2_mean'])} ({_cell(r['cv_r2_sd'])}) "
            f"| {_cell(r['cv_auc_mean'])} ({_cell(r['cv_auc_sd'])}) "
            f"| {_cell(r['test_r2'])} | {_cell(r['test_auc'])} |"
        )
    return "\n".join(lines)


def coefficient_svg(names, values, title: str, top: int = 20) -> str:
    """Horizontal bar chart of the ``top`` largest |coefficients|."""
    order = sorted(range(len(names)), key=lambda j: (-abs(values[j]), names[j]))[:top]
    order = [j for j in order if values[j] != 0.0] or order[:1]
    bar_h, gap, label_w, plot_w, pad = 16, 4, 200, 360, 30
    height = pad * 2 + len(order) * (bar_h + gap)
    width = label_w + plot_w + 80
    vmax = max((abs(values[j]) for j in order), default=0.0) or 1.0
    zero = label_w + plot_w / 2
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="11">',
        f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{_esc(title)}</text>',
        f'<line x1="{zero:.1f}" y1="{pad}" x2="{zero:.1f}" y2="{height - pad + gap}" stroke="#444"/>',
    ]
    for i, j in enumerate(order):
        y = pad + i * (bar_h + gap)
        v = float(values[j])
        w = abs(v) / vmax * plot_w / 2
        x = zero if v >= 0 else zero - w
        color = "#c0392b" if v > 0 else "#2c7fb8"
        out.append(f'<text x="{label_w - 6}" y="{y + bar_h - 4}" text-anchor="end">{_esc(names[j])}</text>')
        out.append(f'<rect x="{x:.2f}" y="{y}" width="{w:.2f}" height="{bar_h}" fill="{color}"/>')
        tx = zero + w + 4 if v >= 0 else zero - w - 4
        anchor = "start" if v >= 0 else "end"
        out.append(f'<text x="{tx:.2f}" y="{y + bar_h - 4}" text-anchor="{anchor}">{v:.3f}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def run_report(cfg: ExperimentConfig) -> str:
    """Markdown metrics table plus one coefficient chart per fitted cell."""
    metrics = _io.read_json(_ensure(cfg.out / "metrics.json"))
    prov = metrics["provenance"]
    out = cfg.out / "report"
    out.mkdir(parents=True, exist_ok=True)
    head = " ".join(f"{k}={prov[k]}" for k in sorted(prov))
    table = metrics_table(metrics)
    (out / "table.md").write_text(
        f"<!-- {head} -->\n\n# Averaged lasso performance\n\n{table}\n", encoding="utf-8"
    )
    for r in metrics["cells"]:
        name = cell_name(r["feature_set"], r["outcome"])
        model_path = cfg.out / "models" / f"{name}.json"
        if not model_path.is_file():
            continue
        model = _io.read_json(model_path)
        names = list(model["coefficients"])
        values = [model["coefficients"][n] for n in names]
        title = f"{_SET_LABELS[r['feature_set']]} → {_OUTCOME_LABELS[r['outcome']]}"
        svg = coefficient_svg(names, values, title)
        (out / f"{name}.svg").write_text(f"<!-- {head} -->\n" + svg, encoding="utf-8")
    return table


def run_all(cfg: ExperimentConfig) -> dict:
    validate_inputs(cfg)
    run_preprocess(cfg)
    needs_topics = any(f in ("lda", "lsi") for s in cfg.feature_sets for f in SET_FRAGMENTS[s])
    if needs_topics:
        run_topics(cfg)
    run_featurize(cfg)
    metrics = run_train_eval(cfg)
    run_report(cfg)
    return metrics
