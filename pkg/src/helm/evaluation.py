"""Model evaluation on a fixed test set: leaf-only sigmoid scores feed the
micro-AUPRC and ranking-loss metrics, and the per-label token embeddings of
active leaves feed a per-level clustering NMI."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import encoder as enc
from .classification import classify
from .data import Dataset
from .metrics import knn_nmi, micro_auprc, ranking_loss
from .training import Trainer


def predict(trainer: Trainer, images: np.ndarray, batch_size: int = 64):
    """Sigmoid scores (N, M_model) and pooled/per-label embeddings; no
    augmentation at evaluation time."""
    scores, pooled, cls_tokens = [], [], []
    with ad.precision(trainer.cfg.precision):
        for lo in range(0, images.shape[0], batch_size):
            chunk = images[lo : lo + batch_size]
            bundle = enc.forward(chunk, trainer.enc_cfg, trainer.store)
            logits = classify(bundle.pooled_cls, trainer.store)
            scores.append(ad._sigmoid(logits.data))
            pooled.append(bundle.pooled_cls.data.copy())
            cls_tokens.append(bundle.cls_embeddings.data.copy())
    return (np.concatenate(scores), np.concatenate(pooled), np.concatenate(cls_tokens))


def leaf_token_points(cls_tokens: np.ndarray, leaf_targets: np.ndarray,
                      trainer: Trainer):
    """One embedding point per (sample, active leaf): the token bound to that
    leaf label, tagged with the leaf's ancestor at every hierarchy level."""
    h = trainer.hierarchy
    leaf_ids = list(h.leaf_ids)
    # token row of each leaf in the model's label space
    if trainer.use_hierarchy:
        token_of_leaf = {leaf: leaf for leaf in leaf_ids}
    else:
        token_of_leaf = {leaf: j for j, leaf in enumerate(leaf_ids)}
    points, level_tags = [], []
    for i in range(leaf_targets.shape[0]):
        for j in np.flatnonzero(leaf_targets[i]):
            leaf = leaf_ids[j]
            points.append(cls_tokens[i, token_of_leaf[leaf]])
            level_tags.append([h.leaf_level_of(leaf, lv) for lv in range(1, h.num_levels + 1)])
    if not points:
        return np.zeros((0, cls_tokens.shape[-1])), []
    tags = np.array(level_tags)
    return np.stack(points), [tags[:, lv] for lv in range(tags.shape[1])]


def evaluate(trainer: Trainer, test_set: Dataset, with_nmi: bool = True,
             nmi_seed: int = 0) -> dict:
    """Metric record for a trained model on a test dataset."""
    scores, pooled, cls_tokens = predict(trainer, test_set.images)
    leaf_targets = test_set.leaf_labels()
    if trainer.use_hierarchy:
        leaf_scores = scores[:, list(test_set.hierarchy.leaf_ids)]
    else:
        leaf_scores = scores  # flat model already predicts the leaf space

    record = {
        "variant": trainer.cfg.variant,
        "ratio": trainer.cfg.ratio,
        "seed": trainer.cfg.seed,
        "n_test": len(test_set),
        "auprc": micro_auprc(leaf_scores, leaf_targets),
        "ranking_loss": ranking_loss(leaf_scores, leaf_targets.astype(np.uint8)),
        "nmi_per_level": None,
        "nmi_mean": None,
    }
    if with_nmi:
        points, tags = leaf_token_points(cls_tokens, leaf_targets, trainer)
        sizes = list(test_set.hierarchy.level_sizes)
        if points.shape[0] > max(sizes) + 1:
            try:
                per_level, mean = knn_nmi(points, tags, sizes, seed=nmi_seed)
                record["nmi_per_level"] = per_level
                record["nmi_mean"] = mean
            except ValueError:
                pass  # degenerate labeling on tiny test sets
    record["embeddings"] = pooled
    return record
