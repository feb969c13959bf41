"""Feature-set assembly, closed-form answer encoding, labels, split and scaling."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import _io
from .corpus import MC_NAMES, SurveyRecord
from .errors import AlignmentError, ConfigurationError, ValidationError

EPDS_CUTOFF = 13
# "agree" on the 0-3 Likert coding (strongly disagree, disagree, agree, strongly agree)
WEB_AGREE = 2

SENTIMENT_COLUMNS = ("swn_pos", "swn_neg", "ol_pos", "ol_neg")

FEATURE_SETS = (
    "sentiment",
    "liwc",
    "lda",
    "lsi",
    "all_nlp",
    "multiple_choice",
    "all_features",
)
OUTCOMES = ("epds", "web")

# feature set -> fragments, in column order
SET_FRAGMENTS = {
    "sentiment": ("sentiment",),
    "liwc": ("liwc",),
    "lda": ("lda",),
    "lsi": ("lsi",),
    "all_nlp": ("sentiment", "liwc", "lda", "lsi"),
    "multiple_choice": ("mc",),
    "all_features": ("sentiment", "liwc", "lda", "lsi", "mc"),
}


@dataclass(frozen=True)
class Fragment:
    """Columns produced by one feature extractor, rows in respondent order."""

    name: str
    columns: tuple[str, ...]
    values: np.ndarray
    row_ids: tuple[str, ...] = ()

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2 or vals.shape[1] != len(self.columns):
            raise AlignmentError(
                f"fragment {self.name!r}: values shape {vals.shape} does not match "
                f"{len(self.columns)} columns"
            )
        object.__setattr__(self, "values", vals)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class FeatureMatrix:
    columns: tuple[str, ...]
    values: np.ndarray
    row_ids: tuple[str, ...] = ()
    center: np.ndarray | None = None
    scale: np.ndarray | None = None

    def __post_init__(self):
        if len(set(self.columns)) != len(self.columns):
            dupes = sorted({c for c in self.columns if self.columns.count(c) > 1})
            raise ValidationError(f"duplicate feature columns: {dupes}")
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2 or vals.shape[1] != len(self.columns):
            raise AlignmentError(f"values shape {vals.shape} vs {len(self.columns)} columns")
        object.__setattr__(self, "values", vals)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def select(self, columns: Sequence[str]) -> "FeatureMatrix":
        idx = [self.columns.index(c) for c in columns]
        return FeatureMatrix(
            tuple(columns),
            self.values[:, idx],
            self.row_ids,
            None if self.center is None else self.center[idx],
            None if self.scale is None else self.scale[idx],
        )


@dataclass(frozen=True)
class RiskLabels:
    outcome: str
    continuous: np.ndarray
    binary: np.ndarray


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    test: np.ndarray
    seed: int

    def to_json(self) -> dict:
        return {"seed": int(self.seed), "train": self.train.tolist(), "test": self.test.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "Split":
        return cls(
            np.asarray(obj["train"], dtype=np.int64),
            np.asarray(obj["test"], dtype=np.int64),
            int(obj["seed"]),
        )


def resolve_columns(feature_set: str, fragments: Mapping[str, Fragment]) -> list[str]:
    if feature_set not in SET_FRAGMENTS:
        raise ConfigurationError(f"unknown feature set {feature_set!r}; choose from {FEATURE_SETS}")
    cols: list[str] = []
    for name in SET_FRAGMENTS[feature_set]:
        if name not in fragments:
            raise ValidationError(f"feature set {feature_set!r} needs fragment {name!r}")
        cols.extend(fragments[name].columns)
    return cols


def encode_mc(record: SurveyRecord) -> np.ndarray:
    """Closed-form answers as linear variables (scale positions 0..max)."""
    return np.asarray(record.mc_answers, dtype=np.float64)


def mc_features(records: Sequence[SurveyRecord]) -> Fragment:
    values = np.array([encode_mc(r) for r in records]).reshape(len(records), len(MC_NAMES))
    return Fragment("mc", MC_NAMES, values, tuple(r.respondent_id for r in records))


def label(records: Sequence[SurveyRecord], outcome: str) -> RiskLabels:
    if outcome == "epds":
        cont = np.array([r.epds_score for r in records], dtype=np.float64)
        binary = cont >= EPDS_CUTOFF
    elif outcome == "web":
        cont = np.array([r.web_score for r in records], dtype=np.float64)
        binary = np.array([max(r.web_items) >= WEB_AGREE for r in records], dtype=bool)
    else:
        raise ConfigurationError(f"unknown outcome {outcome!r}; choose from {OUTCOMES}")
    return RiskLabels(outcome, cont, binary)


def assemble(fragments: Mapping[str, Fragment], feature_set: str) -> FeatureMatrix:
    """Concatenate the fragments that make up ``feature_set`` column-wise."""
    names = SET_FRAGMENTS.get(feature_set)
    if names is None:
        raise ConfigurationError(f"unknown feature set {feature_set!r}; choose from {FEATURE_SETS}")
    missing = [n for n in names if n not in fragments]
    if missing:
        raise ValidationError(f"feature set {feature_set!r}: missing fragments {missing}")
    parts = [fragments[n] for n in names]
    rows = {p.name: p.n_rows for p in parts}
    if len(set(rows.values())) > 1:
        raise AlignmentError(f"fragments have different row counts: {rows}")
    ids = next((p.row_ids for p in parts if p.row_ids), ())
    for p in parts:
        if p.row_ids and p.row_ids != ids:
            raise AlignmentError(f"fragment {p.name!r} rows are not in respondent order")
    columns = tuple(c for p in parts for c in p.columns)
    return FeatureMatrix(columns, np.hstack([p.values for p in parts]), ids)


def make_split(n: int, test_fraction: float = 0.2, seed: int = 0) -> Split:
    """Simple random train/test split with ``floor(n * test_fraction)`` test rows."""
    if not 0 < test_fraction < 1:
        raise ConfigurationError(f"test_fraction must be in (0, 1), got {test_fraction}")
    if n < 5:
        raise ConfigurationError(f"need at least 5 rows to split, got {n}")
    n_test = math.floor(n * test_fraction + 1e-9)
    if n_test == 0 or n_test == n:
        raise ConfigurationError(f"n={n}, test_fraction={test_fraction} leaves an empty side")
    perm = np.random.default_rng(seed).permutation(n)
    return Split(np.sort(perm[n_test:]), np.sort(perm[:n_test]), int(seed))


def zscore(matrix: FeatureMatrix, split: Split) -> FeatureMatrix:
    """Scale every column with mean and sample sd of the training rows.

    Columns that are constant on the training rows become all zeros.
    """
    x = matrix.values
    if split.train.size < 2:
        raise ValidationError("scaling needs at least two training rows")
    if x.shape[0] <= max(split.train.max(), split.test.max(initial=0)):
        raise AlignmentError("split indices exceed the matrix row count")
    tr = x[split.train]
    center = tr.mean(axis=0)
    scale = tr.std(axis=0, ddof=1)
    # sd can underflow to zero for subnormal spreads
    constant = (np.ptp(tr, axis=0) == 0) | ~(scale > 0)
    scale = np.where(constant, 0.0, scale)
    out = (x - center) / np.where(constant, 1.0, scale)
    out[:, constant] = 0.0
    return FeatureMatrix(matrix.columns, out, matrix.row_ids, center, scale)


# -- persistence ------------------------------------------------------------

def write_feature_csv(path: str | Path, matrix: FeatureMatrix, provenance: dict | None = None):
    rows = (
        [rid, *vals]
        for rid, vals in zip(matrix.row_ids or range(matrix.shape[0]), matrix.values.tolist())
    )
    _io.write_csv(path, ["respondent_id", *matrix.columns], rows, provenance)


def read_feature_csv(path: str | Path) -> FeatureMatrix:
    header, rows = _io.read_csv(path)
    if not header or header[0] != "respondent_id":
        raise ValidationError(f"{path}: first column must be respondent_id")
    ids = tuple(r[0] for r in rows)
    try:
        vals = np.array([[float(v) for v in r[1:]] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise ValidationError(f"{path}: non-numeric feature value ({exc})") from None
    return FeatureMatrix(tuple(header[1:]), vals.reshape(len(rows), len(header) - 1), ids)
