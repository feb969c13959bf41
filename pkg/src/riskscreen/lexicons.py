"""Dictionary features: per-word sentiment scores, polarity word lists and
LIWC-format category dictionaries.

Every lexicon is stemmed at load time with the same stemmer used on the
documents, so matching happens stem-to-stem.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Document, data_path, get_stemmer, read_word_list
from .errors import ValidationError
from .features import SENTIMENT_COLUMNS, Fragment


@dataclass(frozen=True)
class ScoredLexicon:
    """stem -> (positive, negative), already averaged over senses."""

    scores: dict[str, tuple[float, float]]

    def __contains__(self, term: str) -> bool:
        return term in self.scores


@dataclass(frozen=True)
class PolarityLists:
    positive: frozenset[str]
    negative: frozenset[str]


@dataclass
class CategoryDictionary:
    """LIWC-style dictionary.

    A token's categories come from an exact (literal) entry when one exists,
    otherwise from the longest wildcard prefix it starts with.
    """

    categories: dict[int, str]
    literals: dict[str, frozenset[int]]
    wildcards: list[tuple[str, frozenset[int]]]
    _memo: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.wildcards = sorted(self.wildcards, key=lambda pw: (-len(pw[0]), pw[0]))
        declared = set(self.categories)
        for pat, ids in [*self.literals.items(), *self.wildcards]:
            unknown = set(ids) - declared
            if unknown:
                raise ValidationError(f"pattern {pat!r} references undeclared categories {sorted(unknown)}")

    @property
    def category_ids(self) -> list[int]:
        return list(self.categories)

    def match(self, token: str) -> frozenset[int]:
        hit = self._memo.get(token)
        if hit is None:
            hit = self.literals.get(token)
            if hit is None:
                hit = next((ids for p, ids in self.wildcards if token.startswith(p)), frozenset())
            self._memo[token] = hit
        return hit


# -- loading ----------------------------------------------------------------

def _average_by_stem(per_term: dict[str, list[tuple[float, float]]], stemmer) -> dict:
    stem = get_stemmer(stemmer)
    by_stem: dict[str, list[tuple[float, float]]] = defaultdict(list)
    for term in sorted(per_term):
        senses = np.asarray(per_term[term])
        by_stem[stem(term)].append(tuple(senses.mean(axis=0)))
    return {s: tuple(float(v) for v in np.asarray(vals).mean(axis=0)) for s, vals in by_stem.items()}


def load_scored_lexicon(path: str | Path | None = None, stemmer: str | None = "porter2") -> ScoredLexicon:
    """Read ``term<TAB>pos<TAB>neg`` lines (one per sense).

    Senses of a term are averaged first; terms that share a stem are then
    averaged again.
    """
    path = Path(path or data_path("swn_demo.tsv"))
    per_term: dict[str, list[tuple[float, float]]] = defaultdict(list)
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValidationError(f"{path}:{lineno}: expected term<TAB>pos<TAB>neg")
            try:
                pos, neg = float(parts[1]), float(parts[2])
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: scores must be numbers") from None
            if not (0 <= pos <= 1 and 0 <= neg <= 1):
                raise ValidationError(f"{path}:{lineno}: scores must lie in [0, 1]")
            per_term[parts[0].strip().lower()].append((pos, neg))
    return ScoredLexicon(_average_by_stem(per_term, stemmer))


def load_sentiwordnet(path: str | Path, stemmer: str | None = "porter2") -> ScoredLexicon:
    """Read the distributed SentiWordNet 3.0 file
    (``POS ID PosScore NegScore SynsetTerms Gloss``)."""
    per_term: dict[str, list[tuple[float, float]]] = defaultdict(list)
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.startswith("#") or not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) < 5:
                raise ValidationError(f"{path}:{lineno}: expected at least 5 tab-separated fields")
            try:
                pos, neg = float(parts[2]), float(parts[3])
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: scores must be numbers") from None
            for entry in parts[4].split():
                term = entry.rsplit("#", 1)[0].lower()
                if term.isalpha():
                    per_term[term].append((pos, neg))
    return ScoredLexicon(_average_by_stem(per_term, stemmer))


def _read_polarity_file(path: Path) -> list[str]:
    # Opinion Lexicon files carry ';' comment headers
    return [w for w in read_word_list(path) if not w.startswith(";")]


def load_polarity_lists(
    positive_path: str | Path | None = None,
    negative_path: str | Path | None = None,
    stemmer: str | None = "porter2",
) -> PolarityLists:
    """Load positive/negative word lists.

    When several words collapse to one stem, the stem takes the majority
    polarity of those words; ties are dropped.
    """
    stem = get_stemmer(stemmer)
    votes: dict[str, int] = defaultdict(int)
    for w in set(_read_polarity_file(Path(positive_path or data_path("ol_positive.txt")))):
        votes[stem(w)] += 1
    for w in set(_read_polarity_file(Path(negative_path or data_path("ol_negative.txt")))):
        votes[stem(w)] -= 1
    return PolarityLists(
        frozenset(s for s, v in votes.items() if v > 0),
        frozenset(s for s, v in votes.items() if v < 0),
    )


def load_category_dictionary(path: str | Path | None = None, stemmer: str | None = "porter2") -> CategoryDictionary:
    """Parse a LIWC ``.dic`` file.

    The header between the first two ``%`` lines maps numeric ids to names;
    each following line is ``pattern<TAB>id[<TAB>id...]`` where a trailing
    ``*`` makes the pattern a prefix wildcard. Literal patterns are stemmed;
    wildcard prefixes are kept verbatim.
    """
    path = Path(path or data_path("liwc_demo.dic"))
    stem = get_stemmer(stemmer)
    with path.open(encoding="utf-8-sig") as fh:
        lines = [(i, ln.rstrip("\r\n")) for i, ln in enumerate(fh, start=1)]
    lines = [(i, ln) for i, ln in lines if ln.strip()]
    if not lines or lines[0][1].strip() != "%":
        raise ValidationError(f"{path}: dictionary must start with a '%' line")
    categories: dict[int, str] = {}
    pos = 1
    while pos < len(lines) and lines[pos][1].strip() != "%":
        lineno, ln = lines[pos]
        parts = ln.split()
        if len(parts) < 2 or not parts[0].isdigit():
            raise ValidationError(f"{path}:{lineno}: expected '<id> <name>' in header")
        cid = int(parts[0])
        if cid in categories:
            raise ValidationError(f"{path}:{lineno}: category id {cid} declared twice")
        categories[cid] = parts[1]
        pos += 1
    if pos == len(lines):
        raise ValidationError(f"{path}: header is not closed by a '%' line")
    if len(set(categories.values())) != len(categories):
        raise ValidationError(f"{path}: duplicate category names")

    literals: dict[str, set[int]] = defaultdict(set)
    wildcards: dict[str, set[int]] = defaultdict(set)
    for lineno, ln in lines[pos + 1:]:
        parts = ln.split("\t")
        if len(parts) < 2:
            raise ValidationError(f"{path}:{lineno}: expected pattern<TAB>id[<TAB>id...]")
        pattern = parts[0].strip().lower()
        try:
            ids = {int(p) for p in parts[1:] if p.strip()}
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: category ids must be integers") from None
        if not pattern or not ids:
            raise ValidationError(f"{path}:{lineno}: empty pattern or category list")
        unknown = ids - set(categories)
        if unknown:
            raise ValidationError(f"{path}:{lineno}: undeclared category ids {sorted(unknown)}")
        if pattern.endswith("*"):
            prefix = pattern[:-1]
            if not prefix or "*" in prefix:
                raise ValidationError(f"{path}:{lineno}: bad wildcard pattern {parts[0]!r}")
            wildcards[prefix] |= ids
        else:
            if "*" in pattern:
                raise ValidationError(f"{path}:{lineno}: '*' is only allowed at the end")
            literals[stem(pattern)] |= ids
    return CategoryDictionary(
        categories,
        {p: frozenset(ids) for p, ids in literals.items()},
        [(p, frozenset(ids)) for p, ids in wildcards.items()],
    )


# -- scoring ----------------------------------------------------------------

def swn_features(doc: Document | Sequence[str], lex: ScoredLexicon) -> tuple[float, float]:
    """Mean positive and negative score over tokens found in the lexicon."""
    tokens = doc.tokens if isinstance(doc, Document) else doc
    # summing per distinct term in sorted order makes the result exactly
    # invariant to token order and to repeating the document
    counts = Counter(t for t in tokens if t in lex.scores)
    if not counts:
        return 0.0, 0.0
    n = sum(counts.values())
    pos = sum(lex.scores[t][0] * c for t, c in sorted(counts.items())) / n
    neg = sum(lex.scores[t][1] * c for t, c in sorted(counts.items())) / n
    return pos, neg


def ol_features(doc: Document | Sequence[str], lists: PolarityLists) -> tuple[float, float]:
    """Share of tokens on the positive and on the negative list."""
    tokens = doc.tokens if isinstance(doc, Document) else doc
    if not tokens:
        return 0.0, 0.0
    n_pos = sum(t in lists.positive for t in tokens)
    n_neg = sum(t in lists.negative for t in tokens)
    return n_pos / len(tokens), n_neg / len(tokens)


def category_features(doc: Document | Sequence[str], dic: CategoryDictionary) -> np.ndarray:
    """Per category, the proportion of tokens matching any of its patterns."""
    tokens = doc.tokens if isinstance(doc, Document) else doc
    ids = dic.category_ids
    out = np.zeros(len(ids))
    if not tokens:
        return out
    col = {cid: j for j, cid in enumerate(ids)}
    for t in tokens:
        for cid in dic.match(t):
            out[col[cid]] += 1
    return out / len(tokens)


def sentiment_fragment(docs: Sequence[Document], lex: ScoredLexicon, lists: PolarityLists) -> Fragment:
    rows = [(*swn_features(d, lex), *ol_features(d, lists)) for d in docs]
    return Fragment(
        "sentiment",
        SENTIMENT_COLUMNS,
        np.array(rows, dtype=np.float64).reshape(len(docs), 4),
        tuple(d.respondent_id for d in docs),
    )


def liwc_fragment(docs: Sequence[Document], dic: CategoryDictionary) -> Fragment:
    names = tuple(f"liwc_{dic.categories[c]}" for c in dic.category_ids)
    values = np.array([category_features(d, dic) for d in docs]).reshape(len(docs), len(names))
    return Fragment("liwc", names, values, tuple(d.respondent_id for d in docs))
