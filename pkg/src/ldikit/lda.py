"""Latent Dirichlet allocation fit by variational EM.

Mean-field family: a Dirichlet(gamma) per document over topic proportions
and an independent categorical phi per token position over topics.  The
E-step alternates the closed-form coordinate updates; the M-step re-fits
the topic-term table and, optionally, the symmetric Dirichlet parameter by
a guarded Newton iteration.  The evidence lower bound is computed exactly
at the variational solution each pass and must never decrease.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln, logsumexp, psi, polygamma

from .corpus import TermDocCounts


@dataclass
class LdaOptions:
    """Knobs for the variational EM fit; defaults suit the test collections."""

    max_em_iters: int = 100
    em_tol: float = 1e-4            # relative bound change between passes
    var_max_iters: int = 100
    var_tol: float = 1e-6           # relative gamma change per document
    estimate_alpha: bool = True
    alpha_min: float = 1e-3
    alpha_max: float = 10.0
    topic_smoothing: float = 1e-9   # added to topic-term sufficient stats
    doc_chunk: int = 1024


@dataclass
class LdaModel:
    """Fitted topic model: symmetric prior weight and topic-term table."""

    k: int
    alpha: float
    beta: np.ndarray            # (k, vocabulary) rows sum to one
    seed: int = 0
    n_em_iters: int = 0


@dataclass
class LdaTrainResult:
    model: LdaModel
    gamma: np.ndarray           # (docs, k) variational Dirichlet parameters
    elbo_trace: list[float] = field(default_factory=list)
    alpha_trace: list[float] = field(default_factory=list)
    converged: bool = False


def _init_beta(k: int, n_terms: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    raw = rng.random((k, n_terms)) + 1.0 / n_terms
    return raw / raw.sum(axis=1, keepdims=True)


def seeded_topic_start(counts: TermDocCounts, k: int, seed: int = 0) -> np.ndarray:
    """Topic start rows built from document clusters.

    Picks k exemplar documents by farthest-first traversal over cosine
    similarity of the count rows, assigns every document to its nearest
    exemplar, and sums each cluster's counts into one topic row plus a
    uniform floor.  Useful on small corpora where a random start often
    lands in a poor basin; pass the result to ``train_lda(beta_init=...)``.
    """
    matrix = counts.matrix.tocsr()
    n_docs, n_terms = matrix.shape
    if not 1 <= k <= n_docs:
        raise ValueError(f"need 1 <= k <= {n_docs} documents, got k={k}")
    dense = matrix.toarray().astype(float)
    norms = np.linalg.norm(dense, axis=1, keepdims=True)
    unit = dense / np.maximum(norms, 1e-12)
    rng = np.random.default_rng(seed)
    exemplars = [int(rng.integers(n_docs))]
    sims = unit @ unit[exemplars[0]]
    while len(exemplars) < k:
        nxt = int(np.argmin(sims))     # least similar to every exemplar so far
        exemplars.append(nxt)
        sims = np.maximum(sims, unit @ unit[nxt])
    assign = np.argmax(unit @ unit[exemplars].T, axis=1)
    beta = np.full((k, n_terms), 1.0 / n_terms)
    for topic in range(k):
        beta[topic] += dense[assign == topic].sum(axis=0)
    return beta / beta.sum(axis=1, keepdims=True)


def _chunk_estep(chunk: sp.csr_matrix, gamma_chunk: np.ndarray,
                 log_beta: np.ndarray, alpha: float, options: LdaOptions):
    """Variational inference for one block of documents.

    Returns the converged gamma block, topic-term sufficient statistics,
    the alpha sufficient statistic, and this block's exact bound
    contribution evaluated at the returned variational parameters under
    the current model.
    """
    n_rows, n_terms = chunk.shape
    k = log_beta.shape[0]
    counts = chunk.data.astype(float)
    token_doc = np.repeat(np.arange(n_rows), np.diff(chunk.indptr))
    token_term = chunk.indices
    lbeta_t = log_beta[:, token_term].T                     # (nnz, k)
    # selection matrix: row sums of count-weighted phi in one multiply
    gather = sp.csr_matrix(
        (counts, (token_doc, np.arange(len(counts)))),
        shape=(n_rows, len(counts)),
    )

    gamma = gamma_chunk.copy()
    log_phi = np.zeros((len(counts), k))
    for _ in range(options.var_max_iters):
        elog_theta = psi(gamma) - psi(gamma.sum(axis=1, keepdims=True))
        log_phi = lbeta_t + elog_theta[token_doc]
        log_phi -= logsumexp(log_phi, axis=1, keepdims=True)
        phi = np.exp(log_phi)
        gamma_new = alpha + gather @ phi
        change = np.abs(gamma_new - gamma).sum(axis=1) / gamma.sum(axis=1)
        gamma = gamma_new
        if change.max() < options.var_tol:
            break
    else:
        phi = np.exp(log_phi)

    weighted_phi = counts[:, None] * phi
    stats = np.empty((k, n_terms))
    for topic in range(k):
        stats[topic] = np.bincount(token_term, weights=weighted_phi[:, topic],
                                   minlength=n_terms)

    elog_theta = psi(gamma) - psi(gamma.sum(axis=1, keepdims=True))
    alpha_stat = float(elog_theta.sum())

    # Exact bound at (gamma, phi): token terms use the true log phi, so no
    # cancellation shortcut that would assume phi optimal for this gamma.
    token_part = phi * (lbeta_t + elog_theta[token_doc])
    token_part -= np.where(phi > 0, phi * log_phi, 0.0)
    bound = float(counts @ token_part.sum(axis=1))
    gamma_total = gamma.sum(axis=1)
    bound += float(
        n_rows * (gammaln(k * alpha) - k * gammaln(alpha))
        + (alpha - 1.0) * elog_theta.sum()
        - gammaln(gamma_total).sum()
        + gammaln(gamma).sum()
        - ((gamma - 1.0) * elog_theta).sum()
    )
    return gamma, stats, alpha_stat, bound


def _update_alpha(alpha: float, n_docs: int, k: int, alpha_stat: float,
                  options: LdaOptions) -> float:
    """Maximize the bound over the symmetric prior weight.

    Newton iteration on log(alpha) with a halving guard so the objective
    never decreases; the result is clamped to the configured range.
    """

    def objective(a: float) -> float:
        return (n_docs * (gammaln(k * a) - k * gammaln(a))
                + (a - 1.0) * alpha_stat)

    def gradient(a: float) -> float:
        return n_docs * k * (psi(k * a) - psi(a)) + alpha_stat

    def curvature(a: float) -> float:
        return n_docs * (k * k * polygamma(1, k * a) - k * polygamma(1, a))

    a = float(np.clip(alpha, options.alpha_min, options.alpha_max))
    for _ in range(100):
        g = gradient(a)
        if abs(g) < 1e-10 * max(1.0, abs(alpha_stat)):
            break
        h = curvature(a)
        log_step = (a * g) / (a * a * h + a * g)
        step = -log_step
        new = a * np.exp(step)
        tries = 0
        while tries < 30:
            clipped = float(np.clip(new, options.alpha_min, options.alpha_max))
            if objective(clipped) >= objective(a) - 1e-12:
                break
            step *= 0.5
            new = a * np.exp(step)
            tries += 1
        clipped = float(np.clip(new, options.alpha_min, options.alpha_max))
        if objective(clipped) < objective(a):
            break
        if abs(clipped - a) < 1e-12 * a:
            a = clipped
            break
        a = clipped
    return a


def train_lda(counts: TermDocCounts, k: int, seed: int = 0,
              alpha_init: float | None = None,
              options: LdaOptions | None = None,
              beta_init: np.ndarray | None = None) -> LdaTrainResult:
    """Fit topics by EM over the variational bound.

    The bound is recorded once per pass, evaluated at the fresh variational
    parameters under the model that produced them, so the recorded sequence
    is non-decreasing.  Stops on relative bound change below ``em_tol``.
    ``beta_init`` overrides the random topic start, e.g. with rows built
    from document counts.
    """
    if k < 1:
        raise ValueError("topic count must be at least 1")
    options = options or LdaOptions()
    matrix = counts.matrix.tocsr()
    n_docs, n_terms = matrix.shape
    if n_docs == 0:
        raise ValueError("cannot fit a topic model on an empty corpus")

    if beta_init is not None:
        beta = np.asarray(beta_init, dtype=float)
        if beta.shape != (k, n_terms):
            raise ValueError(f"topic start must have shape {(k, n_terms)}, "
                             f"got {beta.shape}")
        if np.any(beta < 0) or np.any(beta.sum(axis=1) <= 0):
            raise ValueError("topic start rows must be non-negative with "
                             "positive sums")
        beta = beta / beta.sum(axis=1, keepdims=True)
    else:
        beta = _init_beta(k, n_terms, seed)
    alpha = float(np.clip(alpha_init if alpha_init is not None else 50.0 / k,
                          options.alpha_min, options.alpha_max))
    gamma = np.tile(alpha + counts.doc_lengths[:, None] / k, (1, k)).astype(float)

    elbos: list[float] = []
    alphas: list[float] = [alpha]
    converged = False
    n_iters = 0
    for em_iter in range(options.max_em_iters):
        n_iters = em_iter + 1
        log_beta = np.log(np.maximum(beta, 1e-300))
        stats = np.zeros((k, n_terms))
        alpha_stat = 0.0
        bound = 0.0
        for start in range(0, n_docs, options.doc_chunk):
            stop = min(start + options.doc_chunk, n_docs)
            g, s, a_stat, b = _chunk_estep(
                matrix[start:stop], gamma[start:stop], log_beta, alpha, options)
            gamma[start:stop] = g
            stats += s
            alpha_stat += a_stat
            bound += b
        if not np.isfinite(bound):
            raise RuntimeError(
                f"variational bound became non-finite at pass {n_iters}")
        elbos.append(bound)

        beta = stats + options.topic_smoothing
        beta /= beta.sum(axis=1, keepdims=True)
        if options.estimate_alpha and k > 1:
            alpha = _update_alpha(alpha, n_docs, k, alpha_stat, options)
        alphas.append(alpha)

        if em_iter > 0:
            prev, cur = elbos[-2], elbos[-1]
            if abs(cur - prev) / max(abs(prev), 1e-12) < options.em_tol:
                converged = True
                break
    if not converged:
        warnings.warn(f"EM stopped at the pass limit ({options.max_em_iters}) "
                      "before the bound settled")

    model = LdaModel(k=k, alpha=alpha, beta=beta, seed=seed, n_em_iters=n_iters)
    return LdaTrainResult(model=model, gamma=gamma, elbo_trace=elbos,
                          alpha_trace=alphas, converged=converged)


def infer_document(model: LdaModel, count_vector,
                   options: LdaOptions | None = None):
    """Variational posterior for one held-out document.

    Returns (gamma, phi, term_ids); phi rows follow term_ids order.  An
    empty document yields the prior gamma and an empty phi.
    """
    options = options or LdaOptions()
    row = sp.csr_matrix(np.atleast_2d(count_vector)
                        if not sp.issparse(count_vector) else count_vector)
    if row.shape[0] != 1:
        raise ValueError("expected a single count vector")
    log_beta = np.log(np.maximum(model.beta, 1e-300))
    length = float(row.sum())
    gamma0 = np.full((1, model.k), model.alpha + length / model.k)
    gamma, _, _, _ = _chunk_estep(row, gamma0, log_beta, model.alpha, options)
    elog_theta = psi(gamma) - psi(gamma.sum(axis=1, keepdims=True))
    log_phi = log_beta[:, row.indices].T + elog_theta[np.zeros(len(row.indices), dtype=int)]
    log_phi -= logsumexp(log_phi, axis=1, keepdims=True)
    return gamma[0], np.exp(log_phi), row.indices.copy()


def corpus_bound(model: LdaModel, counts: TermDocCounts,
                 options: LdaOptions | None = None) -> float:
    """Evidence lower bound of a count matrix under a fitted model."""
    options = options or LdaOptions()
    matrix = counts.matrix.tocsr()
    log_beta = np.log(np.maximum(model.beta, 1e-300))
    total = 0.0
    n_docs = matrix.shape[0]
    gamma = np.tile(model.alpha + counts.doc_lengths[:, None] / model.k,
                    (1, model.k)).astype(float)
    for start in range(0, n_docs, options.doc_chunk):
        stop = min(start + options.doc_chunk, n_docs)
        _, _, _, bound = _chunk_estep(
            matrix[start:stop], gamma[start:stop], log_beta, model.alpha,
            options)
        total += bound
    return total
