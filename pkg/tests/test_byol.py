import numpy as np
import pytest

from helm import autodiff as ad
from helm.autodiff import Tensor, backward, precision
from helm.augment import AugmentationPolicy
from helm.byol import (ByolConfig, byol_loss, ema_update, init_byol_heads,
                       make_target, mlp_head, ssl_forward)
from helm.encoder import EncoderConfig, init_encoder
from helm.gradsuite import build_tiny
from helm.params import ParameterStore


class TestByolLoss:
    def test_identical_rows_zero(self, rng):
        p = Tensor(rng.standard_normal((4, 8)))
        loss = byol_loss(p, Tensor(p.data.copy()))
        assert loss.item() == pytest.approx(0.0, abs=1e-6)

    def test_orthogonal_rows_two(self):
        p = Tensor(np.array([[1.0, 0.0], [0.0, 2.0]]))
        t = Tensor(np.array([[0.0, 1.0], [2.0, 0.0]]))
        assert byol_loss(p, t).item() == pytest.approx(2.0, abs=1e-6)

    def test_antiparallel_rows_four(self, rng):
        p = Tensor(rng.standard_normal((3, 5)))
        assert byol_loss(p, Tensor(-p.data)).item() == pytest.approx(4.0, abs=1e-6)

    def test_range_zero_to_four(self, rng):
        for _ in range(50):
            p = Tensor(rng.standard_normal((6, 4)))
            t = Tensor(rng.standard_normal((6, 4)))
            val = byol_loss(p, t).item()
            assert 0.0 <= val <= 4.0

    def test_zero_norm_row_rejected(self):
        p = Tensor(np.array([[1.0, 0.0], [0.0, 0.0]]))
        with pytest.raises(ValueError, match="zero-norm"):
            byol_loss(p, Tensor(np.ones((2, 2))))

    def test_batch_shuffle_invariant(self, rng):
        with precision("float64"):
            p = rng.standard_normal((8, 6))
            t = rng.standard_normal((8, 6))
            perm = rng.permutation(8)
            a = byol_loss(Tensor(p), Tensor(t)).item()
            b = byol_loss(Tensor(p[perm]), Tensor(t[perm])).item()
        assert a == pytest.approx(b, rel=1e-12)

    def test_target_side_gets_no_gradient(self, rng):
        p = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        t = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        backward(byol_loss(p, t))
        assert p.grad is not None
        assert t.grad is None  # stop-gradient on the target path


class TestEma:
    def _pair(self, value_online, value_target):
        online = ParameterStore()
        online.add("w", np.full((2, 2), value_online))
        target = ParameterStore(role="target")
        target.add("w", np.full((2, 2), value_target))
        return online, target

    def test_momentum_example(self):
        online, target = self._pair(1.0, 0.0)
        ema_update(online, target, tau=0.996)
        np.testing.assert_allclose(target["w"].data, np.full((2, 2), 0.004), atol=1e-7)

    def test_tau_one_freezes_target(self):
        online, target = self._pair(1.0, 0.25)
        ema_update(online, target, tau=1.0)
        np.testing.assert_array_equal(target["w"].data, np.full((2, 2), 0.25))

    def test_tau_zero_copies_online(self):
        online, target = self._pair(0.7, 0.25)
        ema_update(online, target, tau=0.0)
        np.testing.assert_array_equal(target["w"].data, target["w"].data * 0 + np.float32(0.7))

    def test_geometric_decay_law(self, rng):
        with precision("float64"):
            online = ParameterStore()
            online.add("w", rng.standard_normal((3, 3)))
            target = online.as_target()
            target["w"].data = rng.standard_normal((3, 3))
            tau = 0.9
            gap0 = np.abs(target["w"].data - online["w"].data)
            for k in range(1, 11):
                ema_update(online, target, tau)
                gap = np.abs(target["w"].data - online["w"].data)
                np.testing.assert_allclose(gap, tau**k * gap0, atol=1e-6)

    def test_name_mismatch_rejected(self):
        online = ParameterStore()
        online.add("w", np.ones(2))
        target = ParameterStore(role="target")
        target.add("other", np.ones(2))
        with pytest.raises(KeyError, match="no online twin"):
            ema_update(online, target, 0.5)

    def test_make_target_excludes_predictor(self, rng):
        store = ParameterStore()
        cfg = ByolConfig(proj_hidden=8, proj_out=4)
        enc_cfg = EncoderConfig(image_size=8, patch_size=4, embed_dim=8, depth=1,
                                heads=2, num_labels=2)
        init_encoder(enc_cfg, rng, store)
        init_byol_heads(8, cfg, rng, store)
        target = make_target(store)
        assert not target.subset_names("byol.pred.")
        assert target.subset_names("byol.proj.")
        assert target.subset_names("encoder.")
        assert all(not p.requires_grad for _, p in target.items())


class TestSslForward:
    def test_identical_paths_zero_loss(self, rng):
        # same weights, same view, identity predictor -> online prediction
        # equals target projection exactly
        with precision("float64"):
            store = ParameterStore()
            cfg = ByolConfig(proj_hidden=8, proj_out=4)
            init_byol_heads(6, cfg, rng, store)
            target = store.as_target(prefixes=("byol.proj.",))
            pooled = Tensor(rng.standard_normal((3, 6)))
            z_online = mlp_head(pooled, store, "byol.proj.")
            z_target = mlp_head(Tensor(pooled.data.copy()), target, "byol.proj.")
            loss = byol_loss(z_online, z_target)  # predictor = identity
        assert loss.item() == pytest.approx(0.0, abs=1e-9)

    def test_label_agnostic_full_batch(self, rng):
        fixture = build_tiny()
        with precision("float64"):
            images = rng.random((4, 3, 8, 8)).astype(np.float32)
            enc_cfg = EncoderConfig(image_size=8, patch_size=4, embed_dim=8, depth=1,
                                    heads=2, num_labels=3)
            identity = AugmentationPolicy(kind="id")
            seeds = [[0, i] for i in range(4)]
            loss = ssl_forward(images, enc_cfg, fixture["store"], fixture["target"],
                               ByolConfig(proj_hidden=16, proj_out=4), identity,
                               identity, seeds, seeds)
            # recompute by hand over each sample separately and average
            singles = []
            for i in range(4):
                li = ssl_forward(images[i : i + 1], enc_cfg, fixture["store"],
                                 fixture["target"], ByolConfig(proj_hidden=16, proj_out=4),
                                 identity, identity, [seeds[i]], [seeds[i]])
                singles.append(li.item())
        assert loss.item() == pytest.approx(np.mean(singles), rel=1e-9)

    def test_symmetric_flag_averages_directions(self, rng):
        fixture = build_tiny()
        images = rng.random((2, 3, 8, 8)).astype(np.float32)
        enc_cfg = EncoderConfig(image_size=8, patch_size=4, embed_dim=8, depth=1,
                                heads=2, num_labels=3)
        identity = AugmentationPolicy(kind="id")
        seeds = [[0, i] for i in range(2)]
        with precision("float64"):
            sym = ssl_forward(images, enc_cfg, fixture["store"], fixture["target"],
                              ByolConfig(proj_hidden=16, proj_out=4, symmetric=True),
                              identity, identity, seeds, seeds)
            one = ssl_forward(images, enc_cfg, fixture["store"], fixture["target"],
                              ByolConfig(proj_hidden=16, proj_out=4), identity,
                              identity, seeds, seeds)
            rev = ssl_forward(images, enc_cfg, fixture["store"], fixture["target"],
                              ByolConfig(proj_hidden=16, proj_out=4), identity,
                              identity, seeds, seeds)
        # identical views make both directions equal strictly when heads match;
        # here the check is structural: symmetric mean of the two directions
        assert 0.0 <= sym.item() <= 4.0
        assert one.item() == pytest.approx(rev.item(), rel=1e-12)

    def test_gradcheck_byol_branch(self):
        with precision("float64"):
            fixture = build_tiny()
            err = ad.gradcheck_params(fixture["losses"]["L_b"], fixture["store"],
                                      eps=1e-5, names=fixture["store"].subset_names("byol."))
        assert err < 1e-3

    def test_xi_zero_gradient_from_composite(self):
        with precision("float64"):
            fixture = build_tiny()
            fixture["store"].zero_grads()
            backward(fixture["losses"]["L"](), fixture["store"])
            assert all(p.grad is None for _, p in fixture["target"].items())
