"""Leaf-label evaluation metrics: micro-averaged PR curve and its area,
ranking loss, clustering NMI, and cross-setting average ranks."""

from __future__ import annotations

import numpy as np

from . import kernels


def micro_pr_curve(scores: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """(recall, precision) points at every distinct score threshold in
    descending order, with the (0, 1) anchor prepended.

    Counts are summed over all classes before precision/recall (micro
    averaging), so the curve is computed on the flattened score matrix.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    targets = np.asarray(targets).ravel().astype(bool)
    if scores.shape != targets.shape:
        raise ValueError("scores and targets must have identical shapes")
    n_pos = int(targets.sum())
    if n_pos == 0:
        raise ValueError("no positive targets; PR curve undefined")

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    cum_tp = np.cumsum(targets[order])
    # one point per distinct score: the last index of each equal-score block
    block_end = np.flatnonzero(np.diff(sorted_scores) != 0)
    block_end = np.append(block_end, sorted_scores.size - 1)
    tp = cum_tp[block_end]
    n_pred = block_end + 1.0
    precision = tp / n_pred
    recall = tp / n_pos
    points = np.column_stack([recall, precision])
    return np.vstack([[0.0, 1.0], points])


def auprc(curve: np.ndarray) -> float:
    """Trapezoidal area under a (recall, precision) curve."""
    curve = np.asarray(curve, dtype=np.float64)
    if curve.ndim != 2 or curve.shape[0] < 2 or curve.shape[1] != 2:
        raise ValueError("curve must be at least two (recall, precision) points")
    recall, precision = curve[:, 0], curve[:, 1]
    widths = np.diff(recall)
    if (widths < 0).any():
        raise ValueError("recall must be non-decreasing")
    return float((widths * (precision[1:] + precision[:-1]) / 2.0).sum())


def micro_auprc(scores: np.ndarray, targets: np.ndarray) -> float:
    return auprc(micro_pr_curve(scores, targets))


def ranking_loss(scores: np.ndarray, targets: np.ndarray) -> float:
    """Mean over samples of the fraction of (positive, negative) label pairs
    with score(positive) <= score(negative). Samples lacking positives or
    negatives contribute 0 and still count in the denominator."""
    scores = np.asarray(scores, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.uint8)
    if scores.ndim != 2 or scores.shape != targets.shape:
        raise ValueError("scores and targets must be matching (N, C) matrices")
    if scores.shape[0] == 0:
        raise ValueError("need at least one sample")
    per_sample = kernels.misordered_fraction(scores, targets)
    return float(per_sample.mean())


def kmeans(points: np.ndarray, k: int, seed: int, iters: int = 100) -> np.ndarray:
    """Deterministic centroid clustering: k-means++ seeding then Lloyd
    iterations; empty clusters grab the farthest point."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if n <= k:
        raise ValueError(f"need more points than clusters (n={n}, k={k})")
    rng = np.random.default_rng(seed)

    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        probs = d2 / d2.sum() if d2.sum() > 0 else np.full(n, 1.0 / n)
        centroids[c] = points[rng.choice(n, p=probs)]
        d2 = np.minimum(d2, ((points - centroids[c]) ** 2).sum(axis=1))

    labels = np.zeros(n, dtype=np.int64)
    for _ in range(iters):
        new_labels = kernels.kmeans_assign(points, centroids)
        for c in range(k):
            members = points[new_labels == c]
            if members.shape[0] == 0:
                far = int(((points - centroids[new_labels]) ** 2).sum(axis=1).argmax())
                centroids[c] = points[far]
                new_labels[far] = c
            else:
                centroids[c] = members.mean(axis=0)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return labels


def nmi(assign_a: np.ndarray, assign_b: np.ndarray) -> float:
    """Normalized mutual information I(a; b) / sqrt(H(a) * H(b))."""
    a = np.asarray(assign_a)
    b = np.asarray(assign_b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("assignments must be matching 1-D arrays")
    n = a.shape[0]
    ua, ia = np.unique(a, return_inverse=True)
    ub, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ua.size, ub.size))
    np.add.at(table, (ia, ib), 1.0)
    pij = table / n
    pa = pij.sum(axis=1)
    pb = pij.sum(axis=0)
    ha = -np.sum(pa[pa > 0] * np.log(pa[pa > 0]))
    hb = -np.sum(pb[pb > 0] * np.log(pb[pb > 0]))
    if ha == 0.0 or hb == 0.0:
        raise ValueError("degenerate single-cluster labeling; NMI undefined")
    nz = pij > 0
    mi = float(np.sum(pij[nz] * np.log(pij[nz] / np.outer(pa, pb)[nz])))
    return mi / float(np.sqrt(ha * hb))


def knn_nmi(embeddings: np.ndarray, labels_per_level: list[np.ndarray],
            clusters_per_level: list[int], seed: int = 0) -> tuple[list[float], float]:
    """Cluster the embeddings once per level with k = that level's label
    count, score each clustering against the level's ground truth with NMI,
    and average across levels."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if len(labels_per_level) != len(clusters_per_level):
        raise ValueError("one cluster count per level required")
    per_level = []
    for level, (labels, k) in enumerate(zip(labels_per_level, clusters_per_level), start=1):
        if embeddings.shape[0] <= k:
            raise ValueError(f"level {level}: need more points than clusters")
        assignment = kmeans(embeddings, k, seed=seed + level)
        per_level.append(nmi(assignment, labels))
    return per_level, float(np.mean(per_level))


def average_ranks(results: dict[str, dict[str, float]], higher_better: bool = True) -> dict[str, float]:
    """Mean rank per variant across settings; rank 1 is best, ties share the
    mean of the tied positions. Every variant must cover every setting."""
    variants = list(results)
    settings: list[str] = sorted({s for row in results.values() for s in row})
    for v in variants:
        missing = [s for s in settings if s not in results[v]]
        if missing:
            raise ValueError(f"variant {v!r} missing settings {missing}")

    totals = {v: 0.0 for v in variants}
    for s in settings:
        vals = np.array([results[v][s] for v in variants], dtype=np.float64)
        keyed = -vals if higher_better else vals
        order = np.argsort(keyed, kind="stable")
        ranks = np.empty(len(variants))
        i = 0
        while i < len(variants):
            j = i
            while j + 1 < len(variants) and keyed[order[j + 1]] == keyed[order[i]]:
                j += 1
            ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
            i = j + 1
        for v, r in zip(variants, ranks):
            totals[v] += r
    return {v: totals[v] / len(settings) for v in variants}
