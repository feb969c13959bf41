"""Latent Dirichlet allocation by collapsed Gibbs sampling, with
probabilistic-coherence selection of the topic count."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numba
import numpy as np

from ._rng import derive_seed
from .corpus import DocTermMatrix
from .errors import ConfigurationError, ValidationError
from .features import Fragment


@dataclass(frozen=True)
class LdaConfig:
    """Sampler settings.

    ``alpha`` defaults to ``50 / k`` and ``beta`` to 0.1, the GibbsLDA++
    defaults. With ``average_samples`` the returned phi/gamma are averaged
    over every post-burn-in sweep instead of taken from the final one.
    """

    k: int
    alpha: float | None = None
    beta: float = 0.1
    n_iterations: int = 2000
    burn_in: int = 1000
    seed: int = 0
    average_samples: bool = False

    def __post_init__(self):
        if self.k < 2:
            raise ConfigurationError(f"k must be >= 2, got {self.k}")
        if self.alpha is not None and self.alpha <= 0:
            raise ConfigurationError("alpha must be positive")
        if self.beta <= 0:
            raise ConfigurationError("beta must be positive")
        if not 0 < self.burn_in < self.n_iterations:
            raise ConfigurationError(
                f"need 0 < burn_in < n_iterations, got {self.burn_in}, {self.n_iterations}"
            )

    @property
    def alpha_value(self) -> float:
        return 50.0 / self.k if self.alpha is None else float(self.alpha)


@dataclass(frozen=True)
class TopicModel:
    phi: np.ndarray  # k x V
    gamma: np.ndarray  # D x k
    config: LdaConfig
    doc_ids: tuple[str, ...] = ()

    @property
    def k(self) -> int:
        return self.phi.shape[0]

    def top_terms(self, z: int, m: int) -> np.ndarray:
        """Indices of the ``m`` highest-probability terms of topic ``z``
        (ties keep vocabulary order)."""
        return np.argsort(-self.phi[z], kind="stable")[:m]


@dataclass(frozen=True)
class CoherenceReport:
    entries: list[tuple[int, float, tuple[float, ...]]] = field(default_factory=list)
    best_k: int = 0


@numba.njit(cache=True, nogil=True)
def _gibbs_sweep(words, docs, z, ndz, nzw, nz, alpha, beta, vbeta, u):
    k = nz.shape[0]
    p = np.empty(k)
    for i in range(words.shape[0]):
        w = words[i]
        d = docs[i]
        t = z[i]
        ndz[d, t] -= 1
        nzw[t, w] -= 1
        nz[t] -= 1
        total = 0.0
        for j in range(k):
            total += (ndz[d, j] + alpha) * (nzw[j, w] + beta) / (nz[j] + vbeta)
            p[j] = total
        target = u[i] * total
        t = 0
        while t < k - 1 and p[t] <= target:
            t += 1
        z[i] = t
        ndz[d, t] += 1
        nzw[t, w] += 1
        nz[t] += 1


def _token_arrays(dtm: DocTermMatrix) -> tuple[np.ndarray, np.ndarray]:
    c = dtm.counts.tocsr()
    counts = c.data.astype(np.int64)
    words = np.repeat(c.indices.astype(np.int64), counts)
    docs = np.repeat(np.repeat(np.arange(c.shape[0], dtype=np.int64), np.diff(c.indptr)), counts)
    return words, docs


def _estimates(ndz, nzw, nz, alpha, beta):
    k, v = nzw.shape
    phi = (nzw + beta) / (nz[:, None] + v * beta)
    gamma = (ndz + alpha) / (ndz.sum(axis=1)[:, None] + k * alpha)
    return phi, gamma


def fit_lda(dtm: DocTermMatrix, config: LdaConfig) -> TopicModel:
    """Fit LDA with ``config.n_iterations`` collapsed Gibbs sweeps.

    Each sweep draws its uniforms from a ``numpy`` Generator seeded with
    ``config.seed``, so the chain is reproducible bit for bit.
    """
    if dtm.n_docs == 0 or dtm.counts.nnz == 0:
        raise ValidationError("cannot fit LDA on an empty document-term matrix")
    if config.k > dtm.n_terms:
        raise ConfigurationError(
            f"k={config.k} exceeds the number of distinct terms ({dtm.n_terms})"
        )
    k, v = config.k, dtm.n_terms
    alpha, beta = config.alpha_value, config.beta
    words, docs = _token_arrays(dtm)
    rng = np.random.default_rng(config.seed)
    z = rng.integers(0, k, size=words.shape[0]).astype(np.int64)
    ndz = np.zeros((dtm.n_docs, k), dtype=np.int64)
    nzw = np.zeros((k, v), dtype=np.int64)
    np.add.at(ndz, (docs, z), 1)
    np.add.at(nzw, (z, words), 1)
    nz = nzw.sum(axis=1)

    phi_sum = np.zeros((k, v))
    gamma_sum = np.zeros((dtm.n_docs, k))
    n_kept = 0
    for it in range(config.n_iterations):
        u = rng.random(words.shape[0])
        _gibbs_sweep(words, docs, z, ndz, nzw, nz, alpha, beta, v * beta, u)
        if config.average_samples and it >= config.burn_in:
            phi, gamma = _estimates(ndz, nzw, nz, alpha, beta)
            phi_sum += phi
            gamma_sum += gamma
            n_kept += 1

    if config.average_samples:
        phi, gamma = phi_sum / n_kept, gamma_sum / n_kept
    else:
        phi, gamma = _estimates(ndz, nzw, nz, alpha, beta)
    # exact simplex rows despite accumulated rounding
    phi /= phi.sum(axis=1, keepdims=True)
    gamma /= gamma.sum(axis=1, keepdims=True)
    return TopicModel(phi=phi, gamma=gamma, config=config, doc_ids=dtm.doc_ids)


def perplexity(model: TopicModel, dtm: DocTermMatrix) -> float:
    """In-sample perplexity; reported as a diagnostic only."""
    c = dtm.counts.tocoo()
    p = np.einsum("nk,kn->n", model.gamma[c.row], model.phi[:, c.col])
    return float(np.exp(-(c.data * np.log(p)).sum() / c.data.sum()))


def topic_coherence(model: TopicModel, dtm: DocTermMatrix, top_m: int = 5) -> list[float]:
    """Probabilistic coherence of each topic's ``top_m`` terms.

    For every pair of top terms with ``w_i`` ranked above ``w_j`` the score
    is ``P(w_j | w_i) - P(w_j)`` with probabilities taken from document
    frequencies; a topic's coherence is the mean over its pairs.
    """
    if top_m < 2:
        raise ConfigurationError(f"top_m must be >= 2, got {top_m}")
    if top_m > dtm.n_terms:
        raise ConfigurationError(f"top_m={top_m} exceeds vocabulary size {dtm.n_terms}")
    presence = dtm.presence().tocsc()
    n_docs = dtm.n_docs
    out = []
    for z in range(model.k):
        top = model.top_terms(z, top_m)
        sub = presence[:, top].toarray().astype(np.float64)
        df = sub.sum(axis=0)
        if np.any(df == 0):
            raise ValidationError(f"topic {z}: a top term never occurs in the corpus")
        co = sub.T @ sub
        iu, ju = np.triu_indices(top_m, k=1)
        scores = co[iu, ju] / df[iu] - df[ju] / n_docs
        out.append(float(scores.mean()))
    return out


def best_k_of(entries) -> int:
    """Largest mean coherence; exact ties go to the smaller k."""
    best = None
    for k, mean, *_ in sorted(entries, key=lambda e: e[0]):
        if best is None or mean > best[1]:
            best = (k, mean)
    return best[0]


def select_k(
    dtm: DocTermMatrix,
    k_range: tuple[int, int],
    base_config: LdaConfig,
    top_m: int = 5,
    threads: int = 1,
) -> CoherenceReport:
    """Fit one model per k in the inclusive range and keep the most coherent."""
    lo, hi = k_range
    if lo < 2 or hi < lo or hi > dtm.n_terms:
        raise ConfigurationError(
            f"k range [{lo}, {hi}] must lie within [2, {dtm.n_terms}]"
        )

    def run(k: int):
        cfg = replace(base_config, k=k, seed=derive_seed(base_config.seed, k))
        try:
            model = fit_lda(dtm, cfg)
        except Exception as exc:
            raise type(exc)(f"k={k}: {exc}") from exc
        per_topic = topic_coherence(model, dtm, top_m)
        return k, float(np.mean(per_topic)), tuple(per_topic)

    ks = list(range(lo, hi + 1))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            entries = list(pool.map(run, ks))
    else:
        entries = [run(k) for k in ks]
    return CoherenceReport(entries=entries, best_k=best_k_of(entries))


def lda_features(model: TopicModel) -> Fragment:
    names = tuple(f"lda_topic_{i + 1}" for i in range(model.k))
    return Fragment("lda", names, model.gamma.copy(), model.doc_ids)
