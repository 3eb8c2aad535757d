import numpy as np
import pytest

from oracles import brute_force_average_precision, brute_force_pr_curve
from ldikit.metrics import (EvalReport, ap_matrix, average_precision,
                            evaluate_scores, macro_average_curve,
                            mean_average_precision, pr_curve, rank_documents)


class TestRanking:
    def test_descending_scores(self):
        ranked = rank_documents(np.array([0.1, 0.9, 0.5]), np.array([1, 2, 3]))
        np.testing.assert_array_equal(ranked, [2, 3, 1])

    def test_ties_break_by_ascending_id(self):
        ranked = rank_documents(np.array([0.5, 0.5, 0.5]), np.array([30, 10, 20]))
        np.testing.assert_array_equal(ranked, [10, 20, 30])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            rank_documents(np.zeros(3), np.zeros(2))


class TestAveragePrecision:
    def test_hand_values(self):
        # relevant at ranks 1 and 3: (1/1 + 2/3) / 2
        assert average_precision([7, 5, 9, 4], {7, 9}) == pytest.approx(5 / 6)
        assert average_precision([7, 5, 9], {5}) == pytest.approx(0.5)
        assert average_precision([1, 2], {1, 2}) == 1.0

    def test_empty_relevant_rejected(self):
        with pytest.raises(ValueError):
            average_precision([1, 2], set())

    def test_missing_relevant_rejected(self):
        with pytest.raises(ValueError, match="missing"):
            average_precision([1, 2], {3})

    def test_matches_brute_force_on_random_rankings(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            m = int(rng.integers(2, 51))
            ids = rng.permutation(m) + 1
            n_rel = int(rng.integers(1, min(m, 10) + 1))
            relevant = set(rng.choice(ids, size=n_rel, replace=False).tolist())
            expected = brute_force_average_precision(ids.tolist(), relevant)
            assert average_precision(ids.tolist(), relevant) == expected

    def test_map_is_plain_mean(self):
        assert mean_average_precision([0.5, 1.0]) == 0.75
        with pytest.raises(ValueError):
            mean_average_precision([])


class TestPrCurve:
    def test_perfect_ranking(self):
        curve = pr_curve([1, 2, 3, 4], {1, 2})
        np.testing.assert_allclose(curve, np.ones(11))

    def test_single_relevant_at_rank_two(self):
        curve = pr_curve([9, 1, 8], {1})
        # precision 1/2 at recall 1.0, interpolated back to recall 0
        np.testing.assert_allclose(curve, np.full(11, 0.5))

    def test_matches_brute_force(self):
        rng = np.random.default_rng(3)
        for _ in range(300):
            m = int(rng.integers(2, 40))
            ids = rng.permutation(m) + 1
            n_rel = int(rng.integers(1, m + 1))
            relevant = set(rng.choice(ids, size=n_rel, replace=False).tolist())
            np.testing.assert_allclose(pr_curve(ids.tolist(), relevant),
                                       brute_force_pr_curve(ids.tolist(), relevant))

    def test_monotone_non_increasing(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            ids = rng.permutation(30) + 1
            relevant = set(rng.choice(ids, size=5, replace=False).tolist())
            curve = pr_curve(ids.tolist(), relevant)
            assert np.all(np.diff(curve) <= 1e-12)


class TestEvaluateScores:
    SCORES = np.array([[0.9, 0.2, 0.5], [0.1, 0.8, 0.3], [0.2, 0.3, 0.4]])
    DOC_IDS = np.array([10, 20, 30])
    QUERY_IDS = np.array([1, 2, 3])

    def test_basic_report(self):
        qrels = {1: {10}, 2: {20, 30}, 3: {10}}
        report = evaluate_scores(self.SCORES, self.QUERY_IDS, self.DOC_IDS, qrels)
        assert report.per_query_ap[1] == 1.0
        assert report.per_query_ap[2] == pytest.approx(1.0)
        assert report.per_query_ap[3] == pytest.approx(1 / 3)
        assert report.map_score == pytest.approx((1 + 1 + 1 / 3) / 3)
        assert report.skipped_queries == []

    def test_unjudged_queries_skipped_not_zeroed(self):
        qrels = {1: {10}, 3: {30}}
        report = evaluate_scores(self.SCORES, self.QUERY_IDS, self.DOC_IDS, qrels)
        assert report.skipped_queries == [2]
        assert set(report.per_query_ap) == {1, 3}
        assert report.map_score == pytest.approx((1.0 + 1.0) / 2)

    def test_no_judged_queries_rejected(self):
        with pytest.raises(ValueError):
            evaluate_scores(self.SCORES, self.QUERY_IDS, self.DOC_IDS, {})

    def test_shape_check(self):
        with pytest.raises(ValueError):
            evaluate_scores(self.SCORES[:, :2], self.QUERY_IDS, self.DOC_IDS,
                            {1: {10}})

    def test_report_serializes(self):
        qrels = {1: {10}}
        report = evaluate_scores(self.SCORES, self.QUERY_IDS, self.DOC_IDS, qrels)
        doc = report.to_dict()
        assert doc["map"] == report.map_score
        assert len(doc["interpolated_precision"]) == 11
        assert doc["per_query_ap"]["1"] == 1.0
        assert isinstance(report, EvalReport)

    def test_macro_curve_is_mean(self):
        curves = [np.ones(11), np.zeros(11)]
        np.testing.assert_allclose(macro_average_curve(curves), np.full(11, 0.5))


class TestApMatrix:
    def test_judged_columns_only(self):
        scores_a = np.array([[0.9, 0.1], [0.1, 0.9], [0.5, 0.4]])
        scores_b = np.array([[0.1, 0.9], [0.9, 0.1], [0.4, 0.5]])
        qrels = {1: {10}, 3: {20}}
        table = ap_matrix([scores_a, scores_b], [1, 2, 3], [10, 20], qrels)
        assert table.shape == (2, 2)
        np.testing.assert_allclose(table[0], [1.0, 0.5])
        np.testing.assert_allclose(table[1], [0.5, 1.0])
