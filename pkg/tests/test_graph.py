import numpy as np
import pytest

from helm.autodiff import Tensor, backward, precision
from helm.classification import BatchLabels, bce_loss
from helm.encoder import EncoderConfig, forward, init_encoder
from helm.graph import (GraphBranchConfig, graph_forward, graph_loss,
                        init_graph, neighbor_matrix, sage_layer)
from helm.hierarchy import EdgeList, build_edges, parse_hierarchy
from helm.params import ParameterStore


def chain_matrix():
    edges = EdgeList(((0, 1), (1, 0), (1, 2), (2, 1)), True, False)
    return neighbor_matrix(edges, 3)


class TestSageLayer:
    def test_chain_hand_values(self):
        nodes = Tensor(np.array([[1.0], [2.0], [3.0]]))
        out = sage_layer(nodes, Tensor(chain_matrix()), Tensor(np.eye(1)),
                         Tensor(np.eye(1)), None, activation="none")
        np.testing.assert_allclose(out.data.ravel(), [3.0, 4.0, 5.0], atol=1e-6)

    def test_no_edges_pure_self_transform(self, rng):
        nodes = Tensor(rng.standard_normal((4, 3)))
        a = Tensor(np.zeros((4, 4)))
        w_self = Tensor(rng.standard_normal((3, 2)))
        w_neigh = Tensor(rng.standard_normal((3, 2)) * 100)
        out = sage_layer(nodes, a, w_self, w_neigh, None, activation="none")
        np.testing.assert_allclose(out.data, nodes.data @ w_self.data, atol=1e-5)

    def test_self_loops_only_aggregate_own_features(self, rng):
        nodes = Tensor(rng.standard_normal((3, 2)))
        a = Tensor(np.eye(3))
        w = Tensor(np.eye(2))
        out = sage_layer(nodes, a, w, w, None, activation="none")
        np.testing.assert_allclose(out.data, 2 * nodes.data, atol=1e-6)


class TestNeighborMatrix:
    def test_rows_mean_normalized(self, ucm):
        a = neighbor_matrix(build_edges(ucm, True, True), ucm.num_labels)
        row_sums = a.sum(axis=1)
        np.testing.assert_allclose(row_sums, np.ones(30), atol=1e-12)

    def test_zero_in_degree_row_stays_zero(self):
        edges = EdgeList(((0, 1),), False, False)
        a = neighbor_matrix(edges, 2)
        np.testing.assert_array_equal(a[0], np.zeros(2))

    def test_out_of_range_edge_rejected(self):
        with pytest.raises(ValueError, match="outside"):
            neighbor_matrix(EdgeList(((0, 5),), False, False), 3)


class TestGraphForward:
    def _setup(self, rng, batch=4):
        h = parse_hierarchy("a:\n  - b\n  - c\n")
        cfg = GraphBranchConfig(hidden_dim=6)
        store = ParameterStore()
        init_graph(5, 3, cfg, rng, store)
        z = Tensor(rng.standard_normal((batch, 3, 5)))
        return h, cfg, store, z

    def test_all_rows_populated_including_unlabeled(self, rng):
        h, cfg, store, z = self._setup(rng)
        logits = graph_forward(z, h, cfg, store)
        assert logits.shape == (4, 3)
        assert (np.abs(logits.data).sum(axis=1) > 0).all()

    def test_single_node_zero_weights_zero_logits(self):
        h = parse_hierarchy("solo:\n")
        cfg = GraphBranchConfig(hidden_dim=2)
        store = ParameterStore()
        init_graph(3, 1, cfg, np.random.default_rng(0), store)
        for name, p in store.items():
            p.data[:] = 0
        logits = graph_forward(Tensor(np.ones((2, 1, 3))), h, cfg, store)
        np.testing.assert_array_equal(logits.data, np.zeros((2, 1)))

    def test_identical_inputs_identical_rows(self, rng):
        h, cfg, store, _ = self._setup(rng)
        row = rng.standard_normal((1, 3, 5))
        z = Tensor(np.concatenate([row, row]))
        logits = graph_forward(z, h, cfg, store)
        np.testing.assert_array_equal(logits.data[0], logits.data[1])

    def test_graph_loss_is_bce(self):
        assert graph_loss is bce_loss

    def test_unlabeled_rows_do_not_change_loss(self, rng):
        with precision("float64"):
            h, cfg, store, z = self._setup(rng)
            targets = (rng.random((4, 3)) < 0.5).astype(np.uint8)
            mask = np.array([True, False, True, False])
            targets = targets * mask[:, None].astype(np.uint8)
            logits = graph_forward(z, h, cfg, store)
            full = bce_loss(logits, BatchLabels(targets, mask))
            sub_logits = Tensor(logits.data[mask])
            sub = bce_loss(sub_logits, BatchLabels(targets[mask], np.ones(2, bool)))
        assert full.item() == sub.item()

    def test_gradient_reaches_cls_tokens(self, rng):
        # the semi-supervised information path: L_g -> z_cls -> encoder tokens
        with precision("float64"):
            h = parse_hierarchy("a:\n  - b\n  - c\n")
            enc_cfg = EncoderConfig(image_size=8, patch_size=4, embed_dim=8,
                                    depth=1, heads=2, num_labels=3)
            gcfg = GraphBranchConfig(hidden_dim=4)
            store = ParameterStore()
            init_encoder(enc_cfg, np.random.default_rng(0), store)
            init_graph(8, 3, gcfg, np.random.default_rng(1), store)
            bundle = forward(rng.random((2, 3, 8, 8)), enc_cfg, store)
            logits = graph_forward(bundle.cls_embeddings, h, gcfg, store)
            labels = BatchLabels(np.array([[1, 1, 0], [1, 0, 1]], dtype=np.uint8),
                                 np.array([True, True]))
            grads = backward(bce_loss(logits, labels), store)
        assert np.linalg.norm(grads["encoder.cls_tokens"]) > 0

    def test_relabeling_equivariance(self, rng):
        # permuting node ids with edges, projection columns, and targets
        # leaves the loss unchanged
        with precision("float64"):
            for _ in range(5):
                m, d, hidden = 5, 4, 3
                perm = rng.permutation(m)
                edges = []
                for child in range(1, m):
                    parent = int(rng.integers(0, child))
                    edges.extend([(parent, child), (child, parent)])
                edges.extend((i, i) for i in range(m))
                a = neighbor_matrix(EdgeList(tuple(edges), True, True), m)
                a_perm = a[np.ix_(perm, perm)]

                cfg = GraphBranchConfig(hidden_dim=hidden)
                store = ParameterStore()
                init_graph(d, m, cfg, np.random.default_rng(3), store)
                store_p = ParameterStore()
                for name, p in store.items():
                    store_p.add(name, p.data[:, perm] if name == "graph.proj.w"
                                else (p.data[perm] if name == "graph.proj.b" else p.data))

                z = rng.standard_normal((2, m, d))
                targets = (rng.random((2, m)) < 0.5).astype(np.uint8)
                labels = BatchLabels(targets, np.ones(2, bool))
                labels_p = BatchLabels(targets[:, perm], np.ones(2, bool))

                base = bce_loss(graph_forward(Tensor(z), _FakeH(m), cfg, store,
                                              neighbor_mean=a), labels)
                permuted = bce_loss(graph_forward(Tensor(z[:, perm]), _FakeH(m), cfg,
                                                  store_p, neighbor_mean=a_perm), labels_p)
                assert base.item() == pytest.approx(permuted.item(), rel=1e-12)


class _FakeH:
    def __init__(self, m):
        self.num_labels = m
