import warnings

import numpy as np
import pytest
import scipy.sparse as sp

from oracles import (dirichlet_multinomial_log_likelihood,
                     two_topic_log_likelihood_quadrature)
from ldikit.corpus import TermDocCounts
from ldikit.lda import (LdaOptions, corpus_bound, infer_document,
                        seeded_topic_start, train_lda)


def make_counts(rows):
    matrix = sp.csr_matrix(np.asarray(rows, dtype=np.int64))
    return TermDocCounts(matrix=matrix,
                         doc_lengths=np.asarray(matrix.sum(axis=1)).ravel())


def random_counts(n_docs, n_terms, seed, max_count=4):
    rng = np.random.default_rng(seed)
    rows = rng.integers(0, max_count, size=(n_docs, n_terms))
    rows[np.arange(n_docs), rng.integers(0, n_terms, n_docs)] += 1
    return make_counts(rows)


def elbo_non_decreasing(trace, slack=1e-8):
    trace = np.asarray(trace)
    floor = slack * np.maximum(np.abs(trace[:-1]), 1.0)
    return np.all(np.diff(trace) >= -floor)


class TestBoundMonotonicity:
    def test_random_corpus(self):
        for seed in range(3):
            counts = random_counts(30, 40, seed)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                result = train_lda(counts, k=5, seed=seed,
                                   options=LdaOptions(max_em_iters=40))
            assert elbo_non_decreasing(result.elbo_trace)
            assert len(result.elbo_trace) == result.model.n_em_iters

    def test_fixed_alpha(self):
        counts = random_counts(20, 25, 1)
        result = train_lda(counts, k=3, seed=0, alpha_init=0.5,
                           options=LdaOptions(estimate_alpha=False,
                                              max_em_iters=40))
        assert elbo_non_decreasing(result.elbo_trace)
        assert all(a == 0.5 for a in result.alpha_trace)


class TestExactnessOracles:
    def test_single_topic_closed_form(self):
        # with one topic the bound equals sum of counts times log beta
        counts = make_counts([[3, 1, 0], [0, 2, 2], [1, 1, 1]])
        result = train_lda(counts, k=1, seed=0,
                           options=LdaOptions(max_em_iters=5))
        log_beta = np.log(result.model.beta[0])
        expected = float((counts.matrix.toarray() * log_beta).sum())
        assert result.elbo_trace[-1] == pytest.approx(expected, rel=1e-9)

    def test_bound_below_enumerated_likelihood(self):
        # tiny documents allow exact marginalization over assignments
        rng = np.random.default_rng(4)
        beta = rng.random((3, 5)) + 0.1
        beta /= beta.sum(axis=1, keepdims=True)
        from ldikit.lda import LdaModel

        model = LdaModel(k=3, alpha=0.7, beta=beta)
        docs = [[0, 2], [1, 1, 4], [3], [4, 0, 2, 1]]
        for token_ids in docs:
            row = np.bincount(token_ids, minlength=5)
            counts = make_counts([row])
            exact = dirichlet_multinomial_log_likelihood(token_ids, 0.7, beta)
            bound = corpus_bound(model, counts)
            assert bound <= exact + 1e-9
            # gap cannot exceed the entropy of uniform assignments
            assert bound >= exact - len(token_ids) * np.log(3) - 0.1

    def test_quadrature_agrees_with_enumeration(self):
        rng = np.random.default_rng(5)
        beta = rng.random((2, 4)) + 0.1
        beta /= beta.sum(axis=1, keepdims=True)
        token_ids = [0, 3, 1]
        enum = dirichlet_multinomial_log_likelihood(token_ids, 1.3, beta)
        quad = two_topic_log_likelihood_quadrature(token_ids, 1.3, beta)
        assert enum == pytest.approx(quad, abs=1e-8)

    def test_bound_below_quadrature_k2(self):
        from ldikit.lda import LdaModel

        rng = np.random.default_rng(6)
        beta = rng.random((2, 6)) + 0.05
        beta /= beta.sum(axis=1, keepdims=True)
        model = LdaModel(k=2, alpha=0.4, beta=beta)
        token_ids = [5, 0, 0, 2]
        counts = make_counts([np.bincount(token_ids, minlength=6)])
        exact = two_topic_log_likelihood_quadrature(token_ids, 0.4, beta)
        assert corpus_bound(model, counts) <= exact + 1e-9


class TestAlphaEstimation:
    def test_alpha_stays_in_bounds(self):
        counts = random_counts(25, 30, 7)
        opts = LdaOptions(max_em_iters=30, alpha_min=1e-3, alpha_max=10.0)
        result = train_lda(counts, k=4, seed=1, options=opts)
        trace = np.asarray(result.alpha_trace)
        assert np.all(trace >= 1e-3 - 1e-12)
        assert np.all(trace <= 10.0 + 1e-12)

    def test_alpha_adapts_to_concentrated_docs(self):
        # block-diagonal corpus: every document is single-topic, so the
        # estimated prior should drop well below its starting point
        block = np.zeros((16, 8), dtype=int)
        block[:8, :4] = np.random.default_rng(0).integers(1, 4, (8, 4))
        block[8:, 4:] = np.random.default_rng(1).integers(1, 4, (8, 4))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            result = train_lda(make_counts(block), k=2, seed=0,
                               options=LdaOptions(max_em_iters=60))
        assert result.alpha_trace[-1] < result.alpha_trace[0]


class TestInitialization:
    def test_beta_init_shape_checked(self):
        counts = random_counts(10, 8, 0)
        with pytest.raises(ValueError, match="shape"):
            train_lda(counts, k=3, beta_init=np.ones((2, 8)))

    def test_beta_init_must_be_distributions(self):
        counts = random_counts(10, 8, 0)
        bad = np.ones((3, 8))
        bad[1, :] = -1.0
        with pytest.raises(ValueError):
            train_lda(counts, k=3, beta_init=bad)

    def test_seeded_start_rows_are_distributions(self):
        counts = random_counts(12, 9, 3)
        start = seeded_topic_start(counts, 4, seed=2)
        assert start.shape == (4, 9)
        np.testing.assert_allclose(start.sum(axis=1), 1.0)
        assert np.all(start > 0)

    def test_seeded_start_deterministic(self):
        counts = random_counts(12, 9, 3)
        np.testing.assert_array_equal(seeded_topic_start(counts, 3, seed=5),
                                      seeded_topic_start(counts, 3, seed=5))

    def test_seeded_start_bounds(self):
        counts = random_counts(5, 6, 0)
        with pytest.raises(ValueError):
            seeded_topic_start(counts, 6)
        with pytest.raises(ValueError):
            seeded_topic_start(counts, 0)

    def test_seeded_start_separates_blocks(self):
        block = np.zeros((6, 6), dtype=int)
        block[:3, :3] = 2
        block[3:, 3:] = 2
        start = seeded_topic_start(make_counts(block), 2, seed=0)
        # one topic concentrates on each block of terms
        lead = {int(np.argmax(start[t])) // 3 for t in range(2)}
        assert lead == {0, 1}


class TestInference:
    def test_posterior_for_training_document(self):
        counts = random_counts(15, 12, 8)
        result = train_lda(counts, k=3, seed=0,
                           options=LdaOptions(max_em_iters=30))
        gamma, phi, term_ids = infer_document(result.model,
                                              counts.matrix[2])
        length = counts.doc_lengths[2]
        assert gamma.sum() == pytest.approx(3 * result.model.alpha + length,
                                            rel=1e-6)
        np.testing.assert_allclose(phi.sum(axis=1), 1.0, atol=1e-9)
        np.testing.assert_array_equal(term_ids, counts.matrix[2].indices)

    def test_empty_document(self):
        counts = random_counts(10, 8, 9)
        result = train_lda(counts, k=2, seed=0,
                           options=LdaOptions(max_em_iters=10))
        gamma, phi, term_ids = infer_document(result.model,
                                              np.zeros(8, dtype=int))
        np.testing.assert_allclose(gamma, result.model.alpha)
        assert phi.shape[0] == 0 and term_ids.size == 0

    def test_single_row_required(self):
        counts = random_counts(10, 8, 9)
        result = train_lda(counts, k=2, seed=0,
                           options=LdaOptions(max_em_iters=5))
        with pytest.raises(ValueError):
            infer_document(result.model, counts.matrix[:2])


class TestTrainingGuards:
    def test_warns_at_pass_limit(self):
        counts = random_counts(20, 15, 10)
        with pytest.warns(UserWarning, match="pass limit"):
            train_lda(counts, k=3, seed=0,
                      options=LdaOptions(max_em_iters=2))

    def test_empty_corpus_rejected(self):
        empty = TermDocCounts(matrix=sp.csr_matrix((0, 5)),
                              doc_lengths=np.zeros(0, dtype=np.int64))
        with pytest.raises(ValueError):
            train_lda(empty, k=2)

    def test_bad_k_rejected(self):
        with pytest.raises(ValueError):
            train_lda(random_counts(5, 5, 0), k=0)

    def test_convergence_flag(self):
        counts = random_counts(10, 10, 11)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            loose = train_lda(counts, k=2, seed=0, alpha_init=1.0,
                              options=LdaOptions(max_em_iters=200,
                                                 em_tol=1e-6,
                                                 estimate_alpha=False))
        assert loose.converged
