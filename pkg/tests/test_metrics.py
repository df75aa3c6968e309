import math

import numpy as np
import pytest

from helm.metrics import (auprc, average_ranks, kmeans, knn_nmi, micro_auprc,
                          micro_pr_curve, nmi, ranking_loss)


def brute_force_ranking_loss(scores, targets):
    """Independent oracle: literal pair enumeration in Python."""
    n = len(scores)
    total = 0.0
    for i in range(n):
        pos = [j for j in range(len(scores[i])) if targets[i][j] == 1]
        neg = [j for j in range(len(scores[i])) if targets[i][j] == 0]
        if not pos or not neg:
            continue
        bad = sum(1 for p in pos for q in neg if scores[i][p] <= scores[i][q])
        total += bad / (len(pos) * len(neg))
    return total / n


def brute_force_auprc(scores, targets):
    """Independent oracle: evaluate every distinct threshold directly, then
    trapezoid over recall with the (0, 1) anchor."""
    flat_s = np.asarray(scores, dtype=np.float64).ravel()
    flat_t = np.asarray(targets).ravel().astype(bool)
    pos = flat_t.sum()
    points = [(0.0, 1.0)]
    for theta in sorted(set(flat_s.tolist()), reverse=True):
        pred = flat_s >= theta
        tp = int((pred & flat_t).sum())
        fp = int((pred & ~flat_t).sum())
        points.append((tp / pos, tp / (tp + fp)))
    area = 0.0
    for (r0, p0), (r1, p1) in zip(points, points[1:]):
        area += (r1 - r0) * (p1 + p0) / 2.0
    return area


class TestPrCurve:
    def test_hand_case_two_classes(self):
        curve = micro_pr_curve(np.array([[0.9, 0.1]]), np.array([[1, 0]]))
        # both thresholds enumerated; passes through (0,1) and (1,1)
        assert [0.0, 1.0] in curve.tolist()
        assert [1.0, 1.0] in curve.tolist()
        assert auprc(curve) == pytest.approx(1.0)

    def test_perfect_scores_pass_through_one_one(self, rng):
        targets = (rng.random((6, 4)) < 0.5).astype(int)
        targets[0, 0] = 1
        curve = micro_pr_curve(targets.astype(float), targets)
        assert any(np.allclose(p, [1.0, 1.0]) for p in curve)
        assert auprc(curve) == pytest.approx(1.0)

    def test_equal_scores_single_interior_point(self, rng):
        targets = (rng.random((5, 8)) < 0.3).astype(int)
        targets[0, 0] = 1
        prevalence = targets.mean()
        curve = micro_pr_curve(np.full((5, 8), 0.5), targets)
        assert curve.shape == (2, 2)
        np.testing.assert_allclose(curve[1], [1.0, prevalence])

    def test_recall_non_decreasing(self, rng):
        for _ in range(20):
            scores = rng.random((4, 6))
            targets = (rng.random((4, 6)) < 0.4).astype(int)
            if targets.sum() == 0:
                continue
            curve = micro_pr_curve(scores, targets)
            assert (np.diff(curve[:, 0]) >= 0).all()

    def test_zero_positives_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            micro_pr_curve(np.array([[0.3]]), np.array([[0]]))


class TestAuprc:
    def test_matches_brute_force_oracle(self, rng):
        for _ in range(200):
            n, c = int(rng.integers(1, 12)), int(rng.integers(2, 8))
            scores = np.round(rng.random((n, c)), 3)  # force score ties
            targets = (rng.random((n, c)) < 0.4).astype(int)
            if targets.sum() == 0:
                targets[0, 0] = 1
            fast = micro_auprc(scores, targets)
            slow = brute_force_auprc(scores, targets)
            assert abs(fast - slow) < 1e-9

    def test_random_scores_approach_prevalence(self, rng):
        # statistically independent scores: AUPRC converges to prevalence
        targets = (rng.random((5000, 20)) < 0.3).astype(int)
        scores = rng.random((5000, 20))
        assert micro_auprc(scores, targets) == pytest.approx(0.3, abs=0.02)

    def test_bounds(self, rng):
        for _ in range(30):
            scores = rng.random((6, 5))
            targets = (rng.random((6, 5)) < 0.5).astype(int)
            if targets.sum() == 0:
                targets[0, 0] = 1
            assert 0.0 <= micro_auprc(scores, targets) <= 1.0

    def test_too_few_points_rejected(self):
        with pytest.raises(ValueError):
            auprc(np.array([[0.0, 1.0]]))


class TestRankingLoss:
    def test_hand_cases(self):
        assert ranking_loss(np.array([[0.9, 0.2, 0.7]]), np.array([[1, 0, 0]])) == 0.0
        assert ranking_loss(np.array([[0.3, 0.8, 0.5]]), np.array([[1, 0, 0]])) == 1.0
        assert ranking_loss(np.array([[0.6, 0.8, 0.1]]), np.array([[1, 0, 0]])) == 0.5

    def test_matches_brute_force_on_500_instances(self, rng):
        for _ in range(500):
            n, c = int(rng.integers(1, 21)), int(rng.integers(2, 11))
            scores = np.round(rng.random((n, c)), 2)
            targets = (rng.random((n, c)) < 0.4).astype(np.uint8)
            fast = ranking_loss(scores, targets)
            slow = brute_force_ranking_loss(scores.tolist(), targets.tolist())
            assert fast == pytest.approx(slow, abs=1e-12)

    def test_monotone_transform_invariance(self, rng):
        scores = rng.random((10, 8))
        targets = (rng.random((10, 8)) < 0.4).astype(np.uint8)
        base = ranking_loss(scores, targets)
        assert ranking_loss(np.exp(3 * scores), targets) == pytest.approx(base)
        assert ranking_loss(scores**3 + 7, targets) == pytest.approx(base)

    def test_sample_permutation_invariance(self, rng):
        scores = rng.random((12, 6))
        targets = (rng.random((12, 6)) < 0.5).astype(np.uint8)
        perm = rng.permutation(12)
        assert ranking_loss(scores[perm], targets[perm]) == pytest.approx(
            ranking_loss(scores, targets))

    def test_degenerate_rows_counted_in_denominator(self):
        scores = np.array([[0.9, 0.1], [0.5, 0.6]])
        targets = np.array([[1, 1], [1, 0]], dtype=np.uint8)  # row 0 degenerate
        assert ranking_loss(scores, targets) == pytest.approx(0.5)

    def test_bounds(self, rng):
        scores = rng.random((20, 7))
        targets = (rng.random((20, 7)) < 0.5).astype(np.uint8)
        assert 0.0 <= ranking_loss(scores, targets) <= 1.0


class TestNmi:
    def test_identical_assignments(self):
        lab = np.array([0, 0, 1, 1, 2, 2])
        assert nmi(lab, lab) == pytest.approx(1.0)

    def test_six_point_hand_computation(self):
        clusters = np.array([0, 0, 1, 1, 2, 2])
        labels = np.array([0, 0, 0, 1, 1, 1])
        # contingency [[2,0],[1,1],[0,2]] over n=6, entropies by hand
        pij = np.array([[2, 0], [1, 1], [0, 2]]) / 6.0
        pa, pb = pij.sum(1), pij.sum(0)
        ha = -sum(p * math.log(p) for p in pa if p > 0)
        hb = -sum(p * math.log(p) for p in pb if p > 0)
        mi = sum(pij[i, j] * math.log(pij[i, j] / (pa[i] * pb[j]))
                 for i in range(3) for j in range(2) if pij[i, j] > 0)
        assert nmi(clusters, labels) == pytest.approx(mi / math.sqrt(ha * hb), rel=1e-12)

    def test_independent_assignments_near_zero(self, rng):
        a = rng.integers(0, 4, size=20_000)
        b = rng.integers(0, 4, size=20_000)
        assert nmi(a, b) < 0.01

    def test_degenerate_single_cluster_rejected(self):
        with pytest.raises(ValueError, match="degenerate"):
            nmi(np.zeros(5, dtype=int), np.array([0, 1, 0, 1, 0]))

    def test_bounds(self, rng):
        for _ in range(20):
            a = rng.integers(0, 3, size=60)
            b = rng.integers(0, 3, size=60)
            assert 0.0 <= nmi(a, b) <= 1.0 + 1e-12


class TestKnnNmi:
    def test_separated_clusters_score_one(self, rng):
        centers = np.array([[0, 0], [8, 0], [0, 8]])
        points = np.concatenate([c + 0.05 * rng.standard_normal((40, 2)) for c in centers])
        labels = np.repeat([0, 1, 2], 40)
        per_level, mean = knn_nmi(points, [labels], [3], seed=0)
        assert per_level[0] == pytest.approx(1.0)
        assert mean == pytest.approx(1.0)

    def test_mean_across_levels(self, rng):
        points = rng.standard_normal((90, 3))
        l1 = rng.integers(0, 2, 90)
        l2 = rng.integers(0, 3, 90)
        per_level, mean = knn_nmi(points, [l1, l2], [2, 3], seed=1)
        assert len(per_level) == 2
        assert mean == pytest.approx(np.mean(per_level))

    def test_needs_more_points_than_clusters(self, rng):
        with pytest.raises(ValueError):
            knn_nmi(rng.standard_normal((3, 2)), [np.array([0, 1, 0])], [3])

    def test_kmeans_deterministic(self, rng):
        points = rng.standard_normal((50, 4))
        a = kmeans(points, 4, seed=9)
        b = kmeans(points, 4, seed=9)
        np.testing.assert_array_equal(a, b)


class TestAverageRanks:
    def test_best_everywhere_rank_one(self):
        table = {
            "helm": {"ucm": 0.9, "aid": 0.8, "dfc": 0.95, "mlrs": 0.85},
            "hmlc": {"ucm": 0.7, "aid": 0.6, "dfc": 0.80, "mlrs": 0.65},
        }
        ranks = average_ranks(table, higher_better=True)
        assert ranks["helm"] == pytest.approx(1.0)
        assert ranks["hmlc"] == pytest.approx(2.0)

    def test_ties_share_mean_rank(self):
        table = {"a": {"s1": 0.5, "s2": 0.5}, "b": {"s1": 0.5, "s2": 0.5}}
        ranks = average_ranks(table)
        assert ranks == {"a": pytest.approx(1.5), "b": pytest.approx(1.5)}

    def test_three_way_ordering(self):
        table = {"x": {"s": 3.0}, "y": {"s": 2.0}, "z": {"s": 1.0}}
        ranks = average_ranks(table, higher_better=True)
        assert (ranks["x"], ranks["y"], ranks["z"]) == (1.0, 2.0, 3.0)

    def test_lower_better_direction(self):
        table = {"x": {"s": 0.1}, "y": {"s": 0.5}}
        ranks = average_ranks(table, higher_better=False)
        assert ranks["x"] == 1.0 and ranks["y"] == 2.0

    def test_missing_cell_rejected(self):
        with pytest.raises(ValueError, match="missing"):
            average_ranks({"a": {"s1": 1.0, "s2": 2.0}, "b": {"s1": 1.0}})
