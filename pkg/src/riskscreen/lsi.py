"""Latent semantic indexing: SVD of the raw term-document counts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import DocTermMatrix
from .errors import ConfigurationError, NumericalError, ValidationError
from .features import Fragment


@dataclass(frozen=True)
class LsiModel:
    """``counts.T ~= term_concept @ diag(singular_values) @ doc_concept.T``.

    ``doc_concept`` holds the orthonormal right factor; features are its rows
    scaled by the singular values (see :func:`lsi_features`).
    """

    term_concept: np.ndarray  # V x r
    singular_values: np.ndarray  # r
    doc_concept: np.ndarray  # D x r
    doc_ids: tuple[str, ...] = ()

    @property
    def rank(self) -> int:
        return self.singular_values.shape[0]

    def reconstruct(self) -> np.ndarray:
        """Term-by-document approximation of the counts."""
        return (self.term_concept * self.singular_values) @ self.doc_concept.T


def fit_lsi(dtm: DocTermMatrix | np.ndarray, rank: int | str = "full") -> LsiModel:
    """Thin SVD of the count matrix (no term weighting).

    Each left singular vector is flipped so its largest-magnitude entry is
    positive, making the output deterministic.
    """
    if isinstance(dtm, DocTermMatrix):
        counts, ids = dtm.toarray().astype(np.float64), dtm.doc_ids
    else:
        counts, ids = np.asarray(dtm, dtype=np.float64), ()
    if counts.ndim != 2 or counts.size == 0:
        raise ValidationError("cannot fit LSI on an empty matrix")
    full = min(counts.shape)
    r = full if rank == "full" else rank
    if not isinstance(r, (int, np.integer)) or r < 1:
        raise ConfigurationError(f"rank must be a positive integer or 'full', got {rank!r}")
    if r > full:
        raise ConfigurationError(f"rank {r} exceeds min(D, V) = {full}")
    try:
        u, s, vt = np.linalg.svd(counts.T, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed: {exc}") from exc
    u, s, w = u[:, :r], s[:r], vt[:r].T
    pivot = np.argmax(np.abs(u), axis=0)
    signs = np.where(u[pivot, np.arange(r)] < 0, -1.0, 1.0)
    return LsiModel(u * signs, s.copy(), w * signs, ids)


def lsi_features(model: LsiModel) -> Fragment:
    names = tuple(f"lsi_concept_{i + 1}" for i in range(model.rank))
    return Fragment("lsi", names, model.doc_concept * model.singular_values, model.doc_ids)
