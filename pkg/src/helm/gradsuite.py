"""Finite-difference verification of every loss branch on a tiny model.

Runs at float64 on a 3-label hierarchy with a d=8, depth-1 encoder and a
2-sample batch; checks L_s, L_g, L_b, and the composite sum against central
differences over every online parameter coordinate.
"""

from __future__ import annotations

import time

import numpy as np

from . import autodiff as ad
from . import encoder as enc
from .byol import ByolConfig, byol_loss, init_byol_heads, make_target, mlp_head
from .classification import BatchLabels, bce_loss, classify, init_head
from .encoder import EncoderConfig, init_encoder
from .graph import GraphBranchConfig, graph_forward, init_graph, neighbor_matrix
from .hierarchy import build_edges, parse_hierarchy
from .params import ParameterStore

TINY_HIERARCHY = "a:\n  - b\n  - c\n"


def build_tiny(seed: int = 0):
    """Model fixture shared by the gradcheck CLI and the acceptance suite."""
    h = parse_hierarchy(TINY_HIERARCHY)
    cfg = EncoderConfig(image_size=8, patch_size=4, embed_dim=8, depth=1,
                        heads=2, num_labels=h.num_labels)
    gcfg = GraphBranchConfig(hidden_dim=8)
    bcfg = ByolConfig(proj_hidden=16, proj_out=4)
    rng = np.random.default_rng(seed)
    store = ParameterStore()
    init_encoder(cfg, rng, store)
    init_head(cfg.embed_dim, h.num_labels, rng, store)
    init_graph(cfg.embed_dim, h.num_labels, gcfg, rng, store)
    init_byol_heads(cfg.embed_dim, bcfg, rng, store)
    target = make_target(store)
    neighbor = neighbor_matrix(build_edges(h, True, True), h.num_labels)

    images = rng.random((2, 3, 8, 8))
    view1 = rng.random((2, 3, 8, 8))
    view2 = rng.random((2, 3, 8, 8))
    labels = BatchLabels(np.array([[1, 1, 0], [0, 0, 0]], dtype=np.uint8),
                         np.array([True, False]))

    def loss_s():
        bundle = enc.forward(images, cfg, store)
        return bce_loss(classify(bundle.pooled_cls, store), labels)

    def loss_g():
        bundle = enc.forward(images, cfg, store)
        return bce_loss(graph_forward(bundle.cls_embeddings, h, gcfg, store,
                                      neighbor_mean=neighbor), labels)

    def loss_b():
        online = enc.forward(view1, cfg, store)
        pred = mlp_head(mlp_head(online.pooled_patches, store, "byol.proj."),
                        store, "byol.pred.")
        tgt = enc.forward(view2, cfg, target)
        return byol_loss(pred, mlp_head(tgt.pooled_patches, target, "byol.proj."))

    def loss_total():
        return loss_s() + loss_g() + loss_b()

    return {"store": store, "target": target,
            "losses": {"L_s": loss_s, "L_g": loss_g, "L_b": loss_b, "L": loss_total}}


def composite_gradcheck(eps: float = 1e-5, seed: int = 0) -> dict:
    """Max relative error per branch at float64; also asserts the target
    store receives no gradient from the composite loss."""
    t0 = time.perf_counter()
    with ad.precision("float64"):
        fixture = build_tiny(seed)
        store = fixture["store"]
        errors = {}
        for name, fn in fixture["losses"].items():
            errors[name] = ad.gradcheck_params(fn, store, eps=eps)
        store.zero_grads()
        ad.backward(fixture["losses"]["L"](), store)
        target_grads = [n for n, p in fixture["target"].items() if p.grad is not None]
    return {
        "errors": errors,
        "max_rel_error": max(errors.values()),
        "target_grads": target_grads,
        "params_checked": store.count(),
        "seconds": time.perf_counter() - t0,
    }
