"""Supervised branch: project the pooled label-token representation to
per-label logits and score them with masked binary cross-entropy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .params import ParameterStore


@dataclass
class BatchLabels:
    """Targets for one batch: (B, M) binary matrix plus a labeled-row mask.

    Unlabeled rows are all-zero placeholders and never reach a loss.
    """

    targets: np.ndarray
    labeled_mask: np.ndarray

    def __post_init__(self):
        self.targets = np.asarray(self.targets)
        self.labeled_mask = np.asarray(self.labeled_mask, dtype=bool)
        if self.targets.ndim != 2 or self.labeled_mask.shape != (self.targets.shape[0],):
            raise ValueError("targets must be (B, M) with a (B,) labeled mask")

    @property
    def num_labeled(self) -> int:
        return int(self.labeled_mask.sum())


def init_head(embed_dim: int, num_labels: int, rng, store: ParameterStore, prefix="head."):
    std = 0.02
    store.add(prefix + "w", np.clip(rng.normal(0.0, std, (embed_dim, num_labels)), -2 * std, 2 * std))
    store.add(prefix + "b", np.zeros(num_labels))


def classify(pooled: Tensor, store: ParameterStore, prefix="head.") -> Tensor:
    """Affine projection of (B, d) pooled features to (B, M) logits."""
    return ad.matmul(pooled, store[prefix + "w"]) + store[prefix + "b"]


def bce_loss(logits: Tensor, labels: BatchLabels) -> Tensor:
    """Masked binary cross-entropy on pre-sigmoid logits.

    Per labeled sample: mean over the M labels of the stable form
    softplus(z) - z*y; then mean over labeled samples only. The final
    reduction is an exact sum, so zero-masked rows cannot perturb the
    result and the loss is bit-identical to the dense labeled sub-batch.
    """
    b_l = labels.num_labeled
    if b_l == 0:
        raise ValueError("no labeled samples in batch; skip the supervised loss")
    if logits.shape != labels.targets.shape:
        raise ValueError(f"logits {logits.shape} do not match targets {labels.targets.shape}")
    y = Tensor(labels.targets.astype(logits.dtype))
    mask = Tensor(labels.labeled_mask.astype(logits.dtype))
    per_elem = ad.softplus(logits) - logits * y
    per_sample = per_elem.mean(axis=1)
    return ad.fsum(per_sample * mask) / float(b_l)
