"""Latent semantic ranking: truncated SVD of the tf-idf term-document matrix.

Factors satisfy a verified residual contract rather than promising a
particular algorithm: every retained singular triplet must reproduce its
matrix-vector products to the requested tolerance.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import svds

from .corpus import TermDocCounts
from .vsm import TfIdfModel, tfidf_query_matrix, train_tfidf


@dataclass
class SvdFactors:
    """Rank-k factors of a (terms x documents) matrix: A ~= U diag(S) Vt."""

    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray
    requested_k: int

    @property
    def k(self) -> int:
        return len(self.s)

    @property
    def rank_deficient(self) -> bool:
        return self.k < self.requested_k


def _normalize_signs(u: np.ndarray, vt: np.ndarray) -> None:
    """Fix the sign ambiguity: largest-magnitude entry of each u column > 0."""
    for i in range(u.shape[1]):
        j = int(np.argmax(np.abs(u[:, i])))
        if u[j, i] < 0:
            u[:, i] = -u[:, i]
            vt[i, :] = -vt[i, :]


def _residuals(matrix, u, s, vt) -> np.ndarray:
    """Relative residual of each triplet against matrix-vector products."""
    av = matrix @ vt.T            # (n_terms, k)
    atu = matrix.T @ u            # (n_docs, k)
    r1 = np.linalg.norm(av - u * s, axis=0)
    r2 = np.linalg.norm(atu - vt.T * s, axis=0)
    return np.maximum(r1, r2) / np.maximum(s, 1e-300)


def _randomized_factors(matrix, k, seed, oversample=10, power_iters=4):
    """Range finding with a Gaussian sketch, QR power iterations, small SVD."""
    rng = np.random.default_rng(seed)
    n_docs = matrix.shape[1]
    width = min(k + oversample, min(matrix.shape))
    sketch = rng.standard_normal((n_docs, width))
    q, _ = np.linalg.qr(matrix @ sketch)
    for _ in range(power_iters):
        q, _ = np.linalg.qr(matrix.T @ q)
        q, _ = np.linalg.qr(matrix @ q)
    small = q.T @ matrix
    if sp.issparse(small):
        small = small.toarray()
    ub, s, vt = np.linalg.svd(np.asarray(small), full_matrices=False)
    return (q @ ub)[:, :k], s[:k], vt[:k, :]


def truncated_svd(matrix, k: int, tol: float = 1e-8, seed: int = 0,
                  method: str = "lanczos") -> SvdFactors:
    """Top-k singular triplets with verified residuals.

    Negligible trailing singular values (matrix rank below k) are trimmed
    and flagged instead of padded.  Residuals above ``tol`` raise for the
    Lanczos path and trigger extra power iterations for the randomized one.
    """
    if k < 1:
        raise ValueError("k must be positive")
    matrix = matrix.astype(float) if sp.issparse(matrix) else np.asarray(matrix, dtype=float)
    largest = abs(matrix).max() if sp.issparse(matrix) else np.abs(matrix).max()
    if largest == 0:
        raise ValueError("matrix is numerically zero")
    min_dim = min(matrix.shape)
    k_eff = min(k, min_dim)

    if method == "lanczos":
        if k_eff >= min_dim:
            dense = matrix.toarray() if sp.issparse(matrix) else matrix
            u, s, vt = np.linalg.svd(dense, full_matrices=False)
            u, s, vt = u[:, :k_eff], s[:k_eff], vt[:k_eff, :]
        else:
            v0 = np.random.default_rng(seed).standard_normal(min_dim)
            u, s, vt = svds(matrix, k=k_eff, v0=v0)
            order = np.argsort(-s)
            u, s, vt = u[:, order], s[order], vt[order, :]
    elif method == "randomized":
        power_iters = 4
        for attempt in range(4):
            u, s, vt = _randomized_factors(matrix, k_eff, seed,
                                           power_iters=power_iters)
            keep = s > max(s[0] if len(s) else 0.0, 1e-300) * 1e-12
            if np.all(_residuals(matrix, u[:, keep], s[keep], vt[keep, :]) <= tol):
                break
            power_iters *= 2
        else:
            warnings.warn("randomized factorization did not reach the "
                          "residual tolerance; factors kept with a flag")
    else:
        raise ValueError(f"unknown SVD method {method!r}")

    keep = s > (s[0] if len(s) else 0.0) * 1e-12
    u, s, vt = u[:, keep], s[keep], vt[keep, :]
    if not len(s):
        raise ValueError("matrix is numerically zero")
    if np.any(np.diff(s) > 1e-12 * s[0]):
        raise RuntimeError("singular values not in descending order")
    _normalize_signs(u, vt)
    res = _residuals(matrix, u, s, vt)
    if method == "lanczos" and np.any(res > tol):
        raise RuntimeError(
            f"SVD residual {res.max():.3e} exceeds tolerance {tol:.3e}")
    return SvdFactors(u=u, s=s, vt=vt, requested_k=k)


@dataclass
class LsiModel:
    """Latent factors over the tf-idf space, plus the weighting that made it."""

    tfidf: TfIdfModel
    factors: SvdFactors


def train_lsi(counts: TermDocCounts, k: int, seed: int = 0,
              tol: float = 1e-8, method: str = "lanczos") -> LsiModel:
    """Factor the unit-normalized tf-idf matrix arranged terms x documents."""
    tfidf = train_tfidf(counts)
    factors = truncated_svd(tfidf.doc_vectors.T, k, tol=tol, seed=seed,
                            method=method)
    return LsiModel(tfidf=tfidf, factors=factors)


def fold_query(factors: SvdFactors, query_vec: np.ndarray) -> np.ndarray:
    """Map a term-space vector into latent space: inv(S) Ut q."""
    q = np.asarray(query_vec, dtype=float).ravel()
    return (factors.u.T @ q) / factors.s


def score_latent(factors: SvdFactors, latent_query: np.ndarray) -> np.ndarray:
    """Cosine between query and documents in the singular-value-scaled space.

    Both sides are scaled by S before the cosine, so a document used as its
    own query scores exactly 1.
    """
    uq = factors.s * np.asarray(latent_query, dtype=float)
    docs = factors.vt * factors.s[:, None]
    doc_norms = np.linalg.norm(docs, axis=0)
    qn = np.linalg.norm(uq)
    denom = qn * doc_norms
    raw = uq @ docs
    return np.divide(raw, denom, out=np.zeros_like(raw), where=denom > 0)


def score_lsi(model: LsiModel, query_counts) -> np.ndarray:
    """Full pipeline for count-vector queries: weight, fold, cosine."""
    q = tfidf_query_matrix(model.tfidf, np.atleast_2d(query_counts)
                           if not sp.issparse(query_counts) else query_counts)
    q = q.toarray()
    latent = (model.factors.u.T @ q.T) / model.factors.s[:, None]
    docs = model.factors.vt * model.factors.s[:, None]
    uq = latent * model.factors.s[:, None]
    doc_norms = np.linalg.norm(docs, axis=0)
    q_norms = np.linalg.norm(uq, axis=0)
    raw = uq.T @ docs
    denom = np.outer(q_norms, doc_norms)
    scores = np.divide(raw, denom, out=np.zeros_like(raw), where=denom > 0)
    if not sp.issparse(query_counts) and np.ndim(query_counts) == 1:
        return scores[0]
    return scores
