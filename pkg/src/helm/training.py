"""Joint training of the composite objective L = L_s + L_g + L_b across the
ablation variants, with proportional labeled/unlabeled batch mixing, AdamW
under a cosine schedule, and EMA target updates after each step."""

from __future__ import annotations

import json
import math
import os
import time
import zlib
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from . import encoder as enc
from .augment import augment_batch, strong_policy, weak_policy
from .autodiff import NumericsError
from .byol import ByolConfig, ema_update, init_byol_heads, make_target, mlp_head, byol_loss
from .checkpoint import save_params
from .classification import BatchLabels, bce_loss, classify, init_head
from .data import Dataset, SplitPlan, make_split, rng_stream
from .encoder import EncoderConfig, init_encoder
from .graph import GraphBranchConfig, graph_forward, init_graph, neighbor_matrix
from .hierarchy import LabelHierarchy, build_edges
from .optim import AdamW, cosine_lr
from .params import ParameterStore

# variant -> (use_hierarchy, use_graph, use_byol); exactly the ablation matrix
VARIANTS = {
    "mlc": (False, False, False),
    "hmlc": (True, False, False),
    "helm-g": (True, True, False),
    "helm-b": (True, False, True),
    "helm": (True, True, True),
}


class TrainingDiverged(NumericsError):
    """Non-finite loss; the message carries the step, branch, and loss scale."""


@dataclass(frozen=True)
class EncoderSettings:
    image_size: int = 32
    patch_size: int = 8
    embed_dim: int = 32
    depth: int = 2
    heads: int = 4
    channels: int = 3
    mlp_ratio: float = 4.0

    def to_config(self, num_labels: int) -> EncoderConfig:
        return EncoderConfig(
            image_size=self.image_size,
            patch_size=self.patch_size,
            embed_dim=self.embed_dim,
            depth=self.depth,
            heads=self.heads,
            num_labels=num_labels,
            channels=self.channels,
            mlp_ratio=self.mlp_ratio,
        )


@dataclass(frozen=True)
class GraphSettings:
    hidden_dim: int | None = None  # defaults to the encoder width
    layers: int = 2
    add_reverse: bool = True
    add_self_loops: bool = True

    def to_config(self, embed_dim: int) -> GraphBranchConfig:
        return GraphBranchConfig(
            hidden_dim=self.hidden_dim or embed_dim,
            layers=self.layers,
            add_reverse=self.add_reverse,
            add_self_loops=self.add_self_loops,
        )


@dataclass(frozen=True)
class ByolSettings:
    proj_out: int | None = None  # defaults to embed_dim // 2
    proj_hidden: int | None = None  # defaults to 4 * proj_out
    tau: float = 0.996
    symmetric: bool = False
    pool: str = "patches"

    def to_config(self, embed_dim: int) -> ByolConfig:
        out = self.proj_out or max(2, embed_dim // 2)
        hidden = self.proj_hidden or 4 * out
        return ByolConfig(proj_hidden=hidden, proj_out=out, tau=self.tau,
                          symmetric=self.symmetric, pool=self.pool)


@dataclass(frozen=True)
class TrainConfig:
    variant: str = "helm"
    epochs: int = 10
    batch_size: int = 16
    base_lr: float = 1e-3
    ratio: float = 1.0
    seed: int = 0
    loss_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    weight_decay: float = 0.01
    precision: str = "float32"
    encoder: EncoderSettings = field(default_factory=EncoderSettings)
    graph: GraphSettings = field(default_factory=GraphSettings)
    byol: ByolSettings = field(default_factory=ByolSettings)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {sorted(VARIANTS)}, got {self.variant!r}")
        if not 0.0 < self.ratio <= 1.0:
            raise ValueError("ratio must be in (0, 1]")
        if self.precision not in ("float32", "float64"):
            raise ValueError("precision must be float32 or float64")

    @property
    def flags(self) -> tuple[bool, bool, bool]:
        return VARIANTS[self.variant]


@dataclass
class LossBundle:
    l_s: float
    l_g: float
    l_b: float
    total: float
    step: int
    lr: float


def compose_batches(plan: SplitPlan, batch_size: int, rng, ssl_mode: bool):
    """Plan one epoch of (indices, labeled_mask) batches.

    SSL mode mixes labeled and unlabeled samples roughly proportionally to
    their pool sizes, with at least one labeled sample per batch while any
    remain in the epoch; supervised mode batches the labeled pool only.
    """
    labeled = np.array(plan.labeled_ids, dtype=np.int64)
    unlabeled = np.array(plan.unlabeled_ids, dtype=np.int64)
    if labeled.size == 0:
        raise ValueError("empty labeled pool")
    if not ssl_mode or unlabeled.size == 0:
        order = labeled[rng.permutation(labeled.size)]
        batches = []
        for lo in range(0, order.size, batch_size):
            idx = order[lo : lo + batch_size]
            batches.append((idx, np.ones(idx.size, dtype=bool)))
        return batches

    if batch_size < 2:
        raise ValueError("batch_size must be >= 2 when unlabeled data is present")
    lab_order = labeled[rng.permutation(labeled.size)]
    unl_order = unlabeled[rng.permutation(unlabeled.size)]
    total = labeled.size + unlabeled.size
    n_batches = math.ceil(total / batch_size)
    batches = []
    li = ui = 0
    for b in range(n_batches):
        size = min(batch_size, total - b * batch_size)
        rem_lab = lab_order.size - li
        rem_unl = unl_order.size - ui
        n_lab = min(size, max(1, round(rem_lab / (n_batches - b)))) if rem_lab else 0
        n_unl = min(size - n_lab, rem_unl)
        n_lab = size - n_unl  # absorb any shortfall from an exhausted pool
        idx = np.concatenate([lab_order[li : li + n_lab], unl_order[ui : ui + n_unl]])
        mask = np.zeros(size, dtype=bool)
        mask[:n_lab] = True
        li += n_lab
        ui += n_unl
        batches.append((idx, mask))
    return batches


class Trainer:
    """Owns the parameter stores and per-step state for one training run."""

    def __init__(self, cfg: TrainConfig, hierarchy: LabelHierarchy):
        self.cfg = cfg
        self.hierarchy = hierarchy
        self.use_hierarchy, self.use_graph, self.use_byol = cfg.flags
        self.ssl_mode = self.use_graph or self.use_byol

        if self.use_hierarchy:
            self.label_cols = np.arange(hierarchy.num_labels)
        else:
            self.label_cols = np.array(hierarchy.leaf_ids)
        self.num_model_labels = int(self.label_cols.size)

        self.enc_cfg = cfg.encoder.to_config(self.num_model_labels)
        self.graph_cfg = cfg.graph.to_config(self.enc_cfg.embed_dim)
        self.byol_cfg = cfg.byol.to_config(self.enc_cfg.embed_dim)
        self.weak = weak_policy()
        self.strong = strong_policy()

        with ad.precision(cfg.precision):
            store = ParameterStore()
            init_encoder(self.enc_cfg, rng_stream(cfg.seed, "init.encoder"), store)
            init_head(self.enc_cfg.embed_dim, self.num_model_labels,
                      rng_stream(cfg.seed, "init.head"), store)
            if self.use_graph:
                init_graph(self.enc_cfg.embed_dim, self.num_model_labels, self.graph_cfg,
                           rng_stream(cfg.seed, "init.graph"), store)
            if self.use_byol:
                init_byol_heads(self.enc_cfg.embed_dim, self.byol_cfg,
                                rng_stream(cfg.seed, "init.byol"), store)
        self.store = store
        self.target = make_target(store) if self.use_byol else None
        if self.use_graph:
            # every graph-bearing variant trains on the hierarchical label space
            assert self.use_hierarchy
            edges = build_edges(hierarchy, self.graph_cfg.add_reverse,
                                self.graph_cfg.add_self_loops)
            self.neighbor_mean = neighbor_matrix(edges, self.num_model_labels)
        else:
            self.neighbor_mean = None
        self.optimizer = AdamW(store, lr=cfg.base_lr, betas=cfg.betas,
                               eps=cfg.adam_eps, weight_decay=cfg.weight_decay)
        self.global_step = 0
        self.total_steps = 1

    def param_counts(self) -> dict[str, int]:
        counts = {
            "encoder": self.store.count("encoder."),
            "head": self.store.count("head."),
            "graph": self.store.count("graph."),
            "byol": self.store.count("byol."),
        }
        counts["total"] = sum(counts.values())
        counts["target"] = self.target.count() if self.target is not None else 0
        return counts

    def _aug_seeds(self, purpose: str, n: int):
        tag = zlib.crc32(purpose.encode())
        return [[self.cfg.seed, tag, self.global_step, i] for i in range(n)]

    def train_step(self, images: np.ndarray, targets_full: np.ndarray,
                   labeled_mask: np.ndarray) -> LossBundle:
        """Forward all active branches, backprop the weighted sum, step AdamW,
        then move the EMA target."""
        cfg = self.cfg
        w_s, w_g, w_b = cfg.loss_weights
        b = images.shape[0]
        targets = targets_full[:, self.label_cols]
        labels = BatchLabels(targets * labeled_mask[:, None].astype(targets.dtype),
                             labeled_mask)
        lr = cosine_lr(self.global_step, self.total_steps, cfg.base_lr)

        with ad.precision(cfg.precision):
            self.store.zero_grads()
            sup_views = augment_batch(images, self.weak, self._aug_seeds("aug.sup", b))
            bundle = enc.forward(sup_views, self.enc_cfg, self.store)

            terms = []
            l_s = l_g = l_b = 0.0
            if labels.num_labeled > 0:
                loss_s = bce_loss(classify(bundle.pooled_cls, self.store), labels)
                self._check_finite(loss_s, "supervised")
                l_s = loss_s.item()
                terms.append(w_s * loss_s)
            if self.use_graph and labels.num_labeled > 0:
                logits_g = graph_forward(bundle.cls_embeddings, self.hierarchy,
                                         self.graph_cfg, self.store,
                                         neighbor_mean=self.neighbor_mean)
                loss_g = bce_loss(logits_g, labels)
                self._check_finite(loss_g, "graph")
                l_g = loss_g.item()
                terms.append(w_g * loss_g)
            if self.use_byol:
                view1 = augment_batch(images, self.strong, self._aug_seeds("aug.byol1", b))
                view2 = augment_batch(images, self.weak, self._aug_seeds("aug.byol2", b))
                online_bundle = enc.forward(view1, self.enc_cfg, self.store)
                pooled = (online_bundle.pooled_patches if self.byol_cfg.pool == "patches"
                          else online_bundle.pooled_cls)
                pred = mlp_head(mlp_head(pooled, self.store, "byol.proj."),
                                self.store, "byol.pred.")
                target_bundle = enc.forward(view2, self.enc_cfg, self.target)
                t_pooled = (target_bundle.pooled_patches if self.byol_cfg.pool == "patches"
                            else target_bundle.pooled_cls)
                t_proj = mlp_head(t_pooled, self.target, "byol.proj.")
                loss_b = byol_loss(pred, t_proj)
                if self.byol_cfg.symmetric:
                    online_bundle2 = enc.forward(view2, self.enc_cfg, self.store)
                    pooled2 = (online_bundle2.pooled_patches if self.byol_cfg.pool == "patches"
                               else online_bundle2.pooled_cls)
                    pred2 = mlp_head(mlp_head(pooled2, self.store, "byol.proj."),
                                     self.store, "byol.pred.")
                    target_bundle2 = enc.forward(view1, self.enc_cfg, self.target)
                    t_pooled2 = (target_bundle2.pooled_patches if self.byol_cfg.pool == "patches"
                                 else target_bundle2.pooled_cls)
                    loss_b = (loss_b + byol_loss(pred2, mlp_head(t_pooled2, self.target,
                                                                 "byol.proj."))) * 0.5
                self._check_finite(loss_b, "byol")
                l_b = loss_b.item()
                terms.append(w_b * loss_b)

            if not terms and not self.ssl_mode:
                raise ValueError("all-unlabeled batch in a supervised-only variant")
            if terms:
                total = terms[0]
                for t in terms[1:]:
                    total = total + t
                self._check_finite(total, "composite")
                grads = ad.backward(total, self.store)
                self.optimizer.step(grads, lr=lr)
                if self.use_byol:
                    ema_update(self.store, self.target, self.byol_cfg.tau)
                total_val = total.item()
            else:
                # an all-unlabeled batch under a graph-only variant has no
                # objective; the step is a no-op
                total_val = 0.0

        bundle_out = LossBundle(l_s=l_s, l_g=l_g, l_b=l_b, total=total_val,
                                step=self.global_step, lr=lr)
        self.global_step += 1
        return bundle_out

    def _check_finite(self, loss, branch: str):
        if not np.isfinite(loss.data).all():
            raise TrainingDiverged(
                f"non-finite {branch} loss at step {self.global_step} "
                f"(|loss|={float(np.abs(loss.data).max()):.3e})"
            )


@dataclass
class TrainResult:
    store: ParameterStore
    target: ParameterStore | None
    epoch_log: list[dict]
    step_log: list[dict]
    param_counts: dict[str, int]
    total_steps: int
    cfg: TrainConfig
    split: SplitPlan


def fit(dataset: Dataset, cfg: TrainConfig, out_dir: str | None = None) -> TrainResult:
    """Fixed-epoch training over a split of the dataset's training pool.

    Writes checkpoint.bin, log.jsonl (per epoch, with wall-clock), and
    steps.jsonl (per step, fully deterministic) when out_dir is given.
    """
    trainer = Trainer(cfg, dataset.hierarchy)
    plan = make_split(len(dataset), cfg.ratio, cfg.seed)
    pool = (len(plan.labeled_ids) + len(plan.unlabeled_ids)) if trainer.ssl_mode \
        else len(plan.labeled_ids)
    steps_per_epoch = math.ceil(pool / cfg.batch_size)
    trainer.total_steps = max(1, cfg.epochs * steps_per_epoch)
    counts = trainer.param_counts()

    epoch_log: list[dict] = []
    step_log: list[dict] = []
    for epoch in range(cfg.epochs):
        rng = rng_stream(cfg.seed, "batches", epoch)
        batches = compose_batches(plan, cfg.batch_size, rng, trainer.ssl_mode)
        t0 = time.perf_counter()
        sums = np.zeros(4)
        lr_last = 0.0
        for idx, mask in batches:
            lb = trainer.train_step(dataset.images[idx], dataset.labels[idx], mask)
            sums += (lb.l_s, lb.l_g, lb.l_b, lb.total)
            lr_last = lb.lr
            step_log.append({"step": lb.step, "L_s": lb.l_s, "L_g": lb.l_g,
                             "L_b": lb.l_b, "L": lb.total, "lr": lb.lr})
        seconds = time.perf_counter() - t0
        means = sums / max(1, len(batches))
        epoch_log.append({
            "epoch": epoch, "L_s": float(means[0]), "L_g": float(means[1]),
            "L_b": float(means[2]), "L": float(means[3]), "lr": lr_last,
            "seconds": seconds, "param_count": counts["total"],
        })

    result = TrainResult(store=trainer.store, target=trainer.target,
                         epoch_log=epoch_log, step_log=step_log,
                         param_counts=counts, total_steps=trainer.total_steps,
                         cfg=cfg, split=plan)
    if out_dir is not None:
        write_run(result, out_dir)
    return result


def _write_jsonl(records, path: str):
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        for rec in records:
            f.write(json.dumps(rec) + "\n")
    os.replace(tmp, path)


def write_run(result: TrainResult, out_dir: str):
    os.makedirs(out_dir, exist_ok=True)
    save_params(result.store.state_dict(), os.path.join(out_dir, "checkpoint.bin"))
    _write_jsonl(result.epoch_log, os.path.join(out_dir, "log.jsonl"))
    _write_jsonl(result.step_log, os.path.join(out_dir, "steps.jsonl"))
    summary = {
        "variant": result.cfg.variant,
        "ratio": result.cfg.ratio,
        "seed": result.cfg.seed,
        "epochs": result.cfg.epochs,
        "total_steps": result.total_steps,
        "param_counts": result.param_counts,
        "labeled": len(result.split.labeled_ids),
        "unlabeled": len(result.split.unlabeled_ids),
        "epoch_seconds": [e["seconds"] for e in result.epoch_log],
        "config": asdict(result.cfg),
    }
    tmp = os.path.join(out_dir, "summary.json.tmp")
    with open(tmp, "w") as f:
        json.dump(summary, f, indent=2)
    os.replace(tmp, os.path.join(out_dir, "summary.json"))
