"""BYOL branch: an online projector+predictor chases an EMA target
projector across two augmented views; no labels involved."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import encoder as enc
from .autodiff import Tensor
from .augment import AugmentationPolicy, augment_batch
from .params import ParameterStore

TARGET_PREFIXES = ("encoder.", "byol.proj.")


@dataclass(frozen=True)
class ByolConfig:
    proj_hidden: int
    proj_out: int
    tau: float = 0.996
    symmetric: bool = False
    pool: str = "patches"  # which pooled representation feeds the heads

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")
        if self.pool not in ("patches", "cls"):
            raise ValueError("pool must be 'patches' or 'cls'")


def init_byol_heads(embed_dim: int, cfg: ByolConfig, rng, store: ParameterStore,
                    prefix="byol."):
    """Projector d -> hidden -> out and predictor out -> hidden -> out, both
    two-layer MLPs with layer normalization (batch-independent)."""
    std = 0.02

    def _mlp(sub, d_in, d_hidden, d_out):
        store.add(prefix + sub + "w1", np.clip(rng.normal(0, std, (d_in, d_hidden)), -2 * std, 2 * std))
        store.add(prefix + sub + "b1", np.zeros(d_hidden))
        store.add(prefix + sub + "ln.g", np.ones(d_hidden))
        store.add(prefix + sub + "ln.b", np.zeros(d_hidden))
        store.add(prefix + sub + "w2", np.clip(rng.normal(0, std, (d_hidden, d_out)), -2 * std, 2 * std))
        store.add(prefix + sub + "b2", np.zeros(d_out))

    _mlp("proj.", embed_dim, cfg.proj_hidden, cfg.proj_out)
    _mlp("pred.", cfg.proj_out, cfg.proj_hidden, cfg.proj_out)


def mlp_head(x: Tensor, store: ParameterStore, prefix: str) -> Tensor:
    h = ad.matmul(x, store[prefix + "w1"]) + store[prefix + "b1"]
    h = ad.relu(ad.layer_norm(h, store[prefix + "ln.g"], store[prefix + "ln.b"]))
    return ad.matmul(h, store[prefix + "w2"]) + store[prefix + "b2"]


def byol_loss(online_pred: Tensor, target_proj: Tensor) -> Tensor:
    """Mean over the batch of 2 - 2 * cosine(online prediction, target
    projection); the target side is gradient-isolated."""
    for t in (online_pred, target_proj):
        norms = np.sqrt((t.data**2).sum(axis=-1))
        if (norms <= 1e-12).any():
            raise ValueError("zero-norm row in similarity loss")
    target = target_proj.detach()
    dot = (online_pred * target).sum(axis=-1)
    n_online = ad.tsqrt((online_pred * online_pred).sum(axis=-1))
    n_target = ad.tsqrt((target * target).sum(axis=-1))
    cos = dot / (n_online * n_target)
    return (2.0 - 2.0 * cos).mean()


def _online_path(images, cfg_enc, store, byol_cfg):
    bundle = enc.forward(images, cfg_enc, store)
    pooled = bundle.pooled_patches if byol_cfg.pool == "patches" else bundle.pooled_cls
    return mlp_head(mlp_head(pooled, store, "byol.proj."), store, "byol.pred.")


def _target_path(images, cfg_enc, target_store, byol_cfg):
    bundle = enc.forward(images, cfg_enc, target_store)
    pooled = bundle.pooled_patches if byol_cfg.pool == "patches" else bundle.pooled_cls
    return mlp_head(pooled, target_store, "byol.proj.")


def ssl_forward(images: np.ndarray, cfg_enc, online: ParameterStore,
                target: ParameterStore, byol_cfg: ByolConfig,
                strong: AugmentationPolicy, weak: AugmentationPolicy,
                seeds_view1, seeds_view2) -> Tensor:
    """Strong view through the online encoder+projector+predictor, weak view
    through the target encoder+projector; label-agnostic over the whole batch."""
    view1 = augment_batch(images, strong, seeds_view1)
    view2 = augment_batch(images, weak, seeds_view2)
    loss = byol_loss(_online_path(view1, cfg_enc, online, byol_cfg),
                     _target_path(view2, cfg_enc, target, byol_cfg))
    if byol_cfg.symmetric:
        loss_rev = byol_loss(_online_path(view2, cfg_enc, online, byol_cfg),
                             _target_path(view1, cfg_enc, target, byol_cfg))
        loss = (loss + loss_rev) * 0.5
    return loss


def make_target(online: ParameterStore) -> ParameterStore:
    """Value copy of the encoder and projector; holds no predictor and
    receives no gradients."""
    return online.as_target(prefixes=TARGET_PREFIXES)


def ema_update(online: ParameterStore, target: ParameterStore, tau: float):
    """xi <- tau * xi + (1 - tau) * theta for every target parameter; runs
    after each optimizer step and never through gradients."""
    for name, t in target.items():
        if name not in online:
            raise KeyError(f"target parameter {name!r} has no online twin")
        o = online[name]
        if o.data.shape != t.data.shape:
            raise ValueError(f"shape mismatch for {name!r}")
        t.data = tau * t.data + (1.0 - tau) * o.data
