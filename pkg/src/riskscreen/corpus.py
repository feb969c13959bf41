"""Survey ingestion, text normalization and the document-term matrix."""

from __future__ import annotations

import csv
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import EmptyCorpusError, ValidationError

N_TEXTS = 4
N_MC = 5
N_WEB = 3
COHORTS = ("pregnant", "postpartum")

MC_NAMES = ("mood", "conflict", "energy", "sleep_hours", "sleep_quality")
MC_RANGES = ((0, 4), (0, 4), (0, 4), (0, 12), (0, 3))
EPDS_RANGE = (0, 30)
EPDS_ITEM10_RANGE = (0, 3)
WEB_ITEM_RANGE = (0, 3)

CSV_COLUMNS = (
    ["id"]
    + [f"text_{i + 1}" for i in range(N_TEXTS)]
    + [f"mc_{i + 1}" for i in range(N_MC)]
    + ["epds", "epds_item10"]
    + [f"web_{i + 1}" for i in range(N_WEB)]
    + ["cohort"]
)

_NON_ALPHA = re.compile(r"[^a-z]+")


def _check_int(name: str, value, lo: int, hi: int) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise ValidationError(f"field {name!r}: expected an integer, got {value!r}")
    if not lo <= value <= hi:
        raise ValidationError(f"field {name!r}: value {value} outside range {lo}-{hi}")
    return int(value)


@dataclass(frozen=True)
class SurveyRecord:
    """One respondent: four journal answers, five closed-form answers and
    the two screening measures."""

    respondent_id: str
    text_answers: tuple[str, ...]
    mc_answers: tuple[int, ...]
    epds_score: int
    epds_item10: int
    web_items: tuple[int, ...]
    cohort: str

    def __post_init__(self):
        if not isinstance(self.respondent_id, str) or not self.respondent_id:
            raise ValidationError("field 'id': expected a non-empty string")
        texts = tuple(self.text_answers)
        if len(texts) != N_TEXTS:
            raise ValidationError(f"field 'texts': expected {N_TEXTS} answers, got {len(texts)}")
        if not all(isinstance(t, str) for t in texts):
            raise ValidationError("field 'texts': answers must be strings")
        mc = tuple(self.mc_answers)
        if len(mc) != N_MC:
            raise ValidationError(f"field 'mc': expected {N_MC} answers, got {len(mc)}")
        mc = tuple(
            _check_int(f"mc[{i}] ({MC_NAMES[i]})", v, *MC_RANGES[i]) for i, v in enumerate(mc)
        )
        web = tuple(self.web_items)
        if len(web) != N_WEB:
            raise ValidationError(f"field 'web_items': expected {N_WEB} items, got {len(web)}")
        web = tuple(_check_int(f"web_items[{i}]", v, *WEB_ITEM_RANGE) for i, v in enumerate(web))
        epds = _check_int("epds", self.epds_score, *EPDS_RANGE)
        item10 = _check_int("epds_item10", self.epds_item10, *EPDS_ITEM10_RANGE)
        if self.cohort not in COHORTS:
            raise ValidationError(f"field 'cohort': expected one of {COHORTS}, got {self.cohort!r}")
        object.__setattr__(self, "text_answers", texts)
        object.__setattr__(self, "mc_answers", mc)
        object.__setattr__(self, "web_items", web)
        object.__setattr__(self, "epds_score", epds)
        object.__setattr__(self, "epds_item10", item10)

    @property
    def web_score(self) -> int:
        return sum(self.web_items)

    def to_json(self) -> str:
        obj = {
            "id": self.respondent_id,
            "texts": list(self.text_answers),
            "mc": list(self.mc_answers),
            "epds": self.epds_score,
            "epds_item10": self.epds_item10,
            "web_items": list(self.web_items),
            "cohort": self.cohort,
        }
        return json.dumps(obj, ensure_ascii=False)

    @classmethod
    def from_mapping(cls, obj: dict) -> "SurveyRecord":
        for key in ("id", "texts", "mc", "epds", "epds_item10", "web_items", "cohort"):
            if key not in obj:
                raise ValidationError(f"field {key!r}: missing")
        for key in ("texts", "mc", "web_items"):
            if not isinstance(obj[key], list):
                raise ValidationError(f"field {key!r}: expected an array")
        return cls(
            respondent_id=obj["id"],
            text_answers=tuple(obj["texts"]),
            mc_answers=tuple(obj["mc"]),
            epds_score=obj["epds"],
            epds_item10=obj["epds_item10"],
            web_items=tuple(obj["web_items"]),
            cohort=obj["cohort"],
        )


def _parse_csv_row(row: list[str]) -> SurveyRecord:
    if len(row) != len(CSV_COLUMNS):
        raise ValidationError(f"expected {len(CSV_COLUMNS)} columns, got {len(row)}")

    def as_int(col: int) -> int:
        try:
            return int(row[col])
        except ValueError:
            raise ValidationError(
                f"field {CSV_COLUMNS[col]!r}: expected an integer, got {row[col]!r}"
            ) from None

    mc0 = 1 + N_TEXTS
    web0 = mc0 + N_MC + 2
    return SurveyRecord(
        respondent_id=row[0],
        text_answers=tuple(row[1:mc0]),
        mc_answers=tuple(as_int(c) for c in range(mc0, mc0 + N_MC)),
        epds_score=as_int(mc0 + N_MC),
        epds_item10=as_int(mc0 + N_MC + 1),
        web_items=tuple(as_int(c) for c in range(web0, web0 + N_WEB)),
        cohort=row[web0 + N_WEB],
    )


def load_corpus(path: str | Path, format: str | None = None) -> list[SurveyRecord]:
    """Read survey records from JSONL or CSV.

    ``format`` defaults to the file extension. Errors are prefixed with
    ``path:line`` and name the offending field.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"{path}: no such file")
    fmt = (format or path.suffix.lstrip(".")).lower()
    records: list[SurveyRecord] = []
    seen: set[str] = set()

    def add(rec: SurveyRecord):
        if rec.respondent_id in seen:
            raise ValidationError(f"field 'id': duplicate id {rec.respondent_id!r}")
        seen.add(rec.respondent_id)
        records.append(rec)

    if fmt == "jsonl":
        with path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ValidationError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
                if not isinstance(obj, dict):
                    raise ValidationError(f"{path}:{lineno}: expected a JSON object")
                try:
                    add(SurveyRecord.from_mapping(obj))
                except ValidationError as exc:
                    raise ValidationError(f"{path}:{lineno}: {exc}") from None
    elif fmt == "csv":
        with path.open(encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            for rowno, row in enumerate(reader):
                if rowno == 0 and row and row[0] == "id":
                    continue
                if not row:
                    continue
                try:
                    add(_parse_csv_row(row))
                except ValidationError as exc:
                    raise ValidationError(f"{path}:{reader.line_num}: {exc}") from None
    else:
        raise ValidationError(f"{path}: unknown corpus format {fmt!r} (use jsonl or csv)")
    return records


def write_corpus_jsonl(records: Iterable[SurveyRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(rec.to_json())
            fh.write("\n")


def write_corpus_csv(records: Iterable[SurveyRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, quoting=csv.QUOTE_NONNUMERIC, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow(
                [r.respondent_id, *r.text_answers, *r.mc_answers, r.epds_score,
                 r.epds_item10, *r.web_items, r.cohort]
            )


# -- preprocessing ----------------------------------------------------------

def read_word_list(path: str | Path) -> list[str]:
    """One token per line; blank lines and ``#`` comments are skipped."""
    words = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                words.append(line.lower())
    return words


def data_path(name: str) -> Path:
    """Path of a file shipped in ``riskscreen/data``."""
    return Path(str(resources.files("riskscreen").joinpath("data").joinpath(name)))


def load_stopwords(path: str | Path | None = None) -> frozenset[str]:
    return frozenset(read_word_list(path or data_path("stopwords.txt")))


@lru_cache(maxsize=None)
def get_stemmer(name: str | None) -> Callable[[str], str]:
    """Return a cached stemming function.

    ``"porter2"`` is the Snowball English stemmer (the revised Porter
    algorithm), ``"porter"`` the original 1980 algorithm, ``None`` the
    identity.
    """
    if name is None or name == "none":
        return lambda w: w
    if name == "porter2":
        from nltk.stem.snowball import SnowballStemmer

        stem = SnowballStemmer("english").stem
    elif name == "porter":
        from nltk.stem.porter import PorterStemmer

        stem = PorterStemmer(mode=PorterStemmer.ORIGINAL_ALGORITHM).stem
    else:
        raise ValidationError(f"unknown stemmer {name!r} (porter2, porter or none)")
    return lru_cache(maxsize=None)(stem)


@dataclass(frozen=True)
class PreprocessOptions:
    stopwords: frozenset[str] = field(default_factory=load_stopwords)
    stemmer: str | None = "porter2"
    min_token_len: int = 2


@dataclass(frozen=True)
class Document:
    respondent_id: str
    tokens: tuple[str, ...]
    raw_char_len: int


def tokenize(text: str, min_len: int = 2) -> list[str]:
    """Lowercase and split on anything that is not an ASCII letter."""
    return [t for t in _NON_ALPHA.split(text.lower()) if len(t) >= min_len]


def preprocess_text(text: str, opts: PreprocessOptions) -> list[str]:
    stem = get_stemmer(opts.stemmer)
    out = []
    for tok in tokenize(text, opts.min_token_len):
        if tok in opts.stopwords:
            continue
        s = stem(tok)
        if s:
            out.append(s)
    return out


def preprocess(record: SurveyRecord, opts: PreprocessOptions | None = None) -> Document:
    """Join the four answers into one document and normalize it."""
    opts = opts or PreprocessOptions()
    text = " ".join(record.text_answers)
    return Document(record.respondent_id, tuple(preprocess_text(text, opts)), len(text))


# -- vocabulary and counts --------------------------------------------------

@dataclass(frozen=True)
class Vocabulary:
    terms: tuple[str, ...]
    document_frequency: np.ndarray
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.terms)})
        if len(self._index) != len(self.terms):
            raise ValidationError("vocabulary terms must be unique")

    def __len__(self) -> int:
        return len(self.terms)

    def __contains__(self, term: str) -> bool:
        return term in self._index

    def index(self, term: str) -> int:
        return self._index[term]

    def term(self, i: int) -> str:
        return self.terms[i]


@dataclass(frozen=True)
class DocTermMatrix:
    """Sparse ``n_docs x n_terms`` integer counts (CSR)."""

    counts: sp.csr_matrix
    doc_ids: tuple[str, ...]

    @property
    def n_docs(self) -> int:
        return self.counts.shape[0]

    @property
    def n_terms(self) -> int:
        return self.counts.shape[1]

    def toarray(self) -> np.ndarray:
        return self.counts.toarray()

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.counts.sum(axis=1)).ravel()

    def presence(self) -> sp.csr_matrix:
        """Binary document-occurrence matrix."""
        b = self.counts.copy()
        b.data = np.ones_like(b.data)
        return b

    def document_frequency(self) -> np.ndarray:
        return np.diff(self.counts.tocsc().indptr)

    def take_rows(self, rows: Sequence[int]) -> "DocTermMatrix":
        rows = list(rows)
        return DocTermMatrix(self.counts[rows], tuple(self.doc_ids[i] for i in rows))


def build_dtm(docs: Sequence[Document], min_df: int = 2) -> tuple[Vocabulary, DocTermMatrix]:
    """Count tokens per document over terms with document frequency >= ``min_df``.

    Terms are ordered lexicographically so the column order never depends on
    document order.
    """
    if not docs:
        raise EmptyCorpusError("no documents")
    if min_df < 1:
        raise ValidationError(f"min_df must be >= 1, got {min_df}")
    df = Counter()
    for d in docs:
        df.update(set(d.tokens))
    terms = sorted(t for t, n in df.items() if n >= min_df)
    if not terms:
        raise EmptyCorpusError(f"no term occurs in at least {min_df} documents")
    vocab = Vocabulary(tuple(terms), np.array([df[t] for t in terms], dtype=np.int64))

    indptr = [0]
    indices: list[int] = []
    data: list[int] = []
    for d in docs:
        c = Counter(t for t in d.tokens if t in vocab)
        for t in sorted(c, key=vocab.index):
            indices.append(vocab.index(t))
            data.append(c[t])
        indptr.append(len(indices))
    counts = sp.csr_matrix(
        (np.array(data, dtype=np.int64), np.array(indices, dtype=np.int64), np.array(indptr)),
        shape=(len(docs), len(terms)),
    )
    return vocab, DocTermMatrix(counts, tuple(d.respondent_id for d in docs))
