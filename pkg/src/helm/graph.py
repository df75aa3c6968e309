"""Graph branch: GraphSAGE message passing over the label hierarchy with the
label-token embeddings as node features, pooled and projected to logits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .classification import bce_loss
from .hierarchy import EdgeList, LabelHierarchy, build_edges
from .params import ParameterStore

graph_loss = bce_loss  # identical masked-BCE contract, applied to graph logits


@dataclass(frozen=True)
class GraphBranchConfig:
    hidden_dim: int
    layers: int = 2
    aggregator: str = "mean"
    activation: str = "relu"
    add_reverse: bool = True
    add_self_loops: bool = True

    def __post_init__(self):
        if self.layers < 1 or self.hidden_dim < 1:
            raise ValueError("layers and hidden_dim must be >= 1")
        if self.aggregator != "mean":
            raise ValueError(f"unsupported aggregator {self.aggregator!r}")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")


def neighbor_matrix(edges: EdgeList, num_nodes: int) -> np.ndarray:
    """Row-normalized in-neighbor averaging matrix: (A @ H)[v] is the mean of
    h_u over edges (u -> v); rows of nodes with no in-edges stay zero."""
    a = np.zeros((num_nodes, num_nodes))
    for src, tgt in edges.edges:
        if src >= num_nodes or tgt >= num_nodes:
            raise ValueError(f"edge ({src}, {tgt}) outside 0..{num_nodes - 1}")
        a[tgt, src] += 1.0
    deg = a.sum(axis=1, keepdims=True)
    np.divide(a, deg, out=a, where=deg > 0)
    return a


def init_graph(in_dim: int, num_labels: int, cfg: GraphBranchConfig, rng,
               store: ParameterStore, prefix="graph."):
    std = 0.02
    dims = [in_dim] + [cfg.hidden_dim] * cfg.layers
    for i in range(cfg.layers):
        store.add(prefix + f"layer{i}.w_self",
                  np.clip(rng.normal(0, std, (dims[i], dims[i + 1])), -2 * std, 2 * std))
        store.add(prefix + f"layer{i}.w_neigh",
                  np.clip(rng.normal(0, std, (dims[i], dims[i + 1])), -2 * std, 2 * std))
        store.add(prefix + f"layer{i}.b", np.zeros(dims[i + 1]))
    store.add(prefix + "proj.w",
              np.clip(rng.normal(0, std, (cfg.hidden_dim, num_labels)), -2 * std, 2 * std))
    store.add(prefix + "proj.b", np.zeros(num_labels))


def sage_layer(nodes: Tensor, neighbor_mean: Tensor, w_self: Tensor, w_neigh: Tensor,
               bias: Tensor | None = None, activation: str = "relu") -> Tensor:
    """out_v = act(W_self h_v + W_neigh mean_{u in N(v)} h_u [+ b])."""
    agg = ad.matmul(neighbor_mean, nodes)
    out = ad.matmul(nodes, w_self) + ad.matmul(agg, w_neigh)
    if bias is not None:
        out = out + bias
    if activation == "relu":
        out = ad.relu(out)
    elif activation != "none":
        raise ValueError(f"unsupported activation {activation!r}")
    return out


def graph_forward(cls_embeddings: Tensor, hierarchy: LabelHierarchy,
                  cfg: GraphBranchConfig, store: ParameterStore, prefix="graph.",
                  neighbor_mean: np.ndarray | None = None) -> Tensor:
    """Run the SAGE stack per sample over all (B, M, d) node features, mean-pool
    the M nodes, and project to (B, M) logits. Every batch row is processed,
    labeled or not."""
    m = hierarchy.num_labels
    if neighbor_mean is None:
        neighbor_mean = neighbor_matrix(
            build_edges(hierarchy, cfg.add_reverse, cfg.add_self_loops), m
        )
    a = Tensor(neighbor_mean)
    h = cls_embeddings
    for i in range(cfg.layers):
        h = sage_layer(h, a,
                       store[prefix + f"layer{i}.w_self"],
                       store[prefix + f"layer{i}.w_neigh"],
                       store[prefix + f"layer{i}.b"],
                       cfg.activation)
    pooled = h.mean(axis=1)
    return ad.matmul(pooled, store[prefix + "proj.w"]) + store[prefix + "proj.b"]
