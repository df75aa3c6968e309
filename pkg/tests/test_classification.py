import math

import numpy as np
import pytest

from helm import autodiff as ad
from helm.autodiff import Tensor, backward, precision
from helm.classification import BatchLabels, bce_loss, classify, init_head
from helm.params import ParameterStore


class TestClassify:
    def test_zero_features_zero_bias(self):
        store = ParameterStore()
        init_head(4, 3, np.random.default_rng(0), store)
        logits = classify(Tensor(np.zeros((2, 4))), store)
        np.testing.assert_array_equal(logits.data, np.zeros((2, 3)))

    def test_scalar_affine(self):
        store = ParameterStore()
        store.add("head.w", np.array([[2.0]]))
        store.add("head.b", np.array([1.0]))
        logits = classify(Tensor(np.array([[3.0]])), store)
        assert logits.data[0, 0] == pytest.approx(7.0)

    def test_batch_shape(self, rng):
        store = ParameterStore()
        init_head(768, 30, rng, store)
        logits = classify(Tensor(rng.standard_normal((16, 768))), store)
        assert logits.shape == (16, 30)


class TestBceLoss:
    def test_logit_zero_target_one(self):
        with precision("float64"):
            labels = BatchLabels(np.array([[1]]), np.array([True]))
            loss = bce_loss(Tensor(np.zeros((1, 1))), labels)
        assert loss.item() == pytest.approx(math.log(2), rel=1e-12)

    def test_saturated_predictions_near_zero(self):
        with precision("float64"):
            targets = np.array([[1, 0, 1], [0, 1, 0]], dtype=np.uint8)
            logits = np.where(targets == 1, 20.0, -20.0)
            labels = BatchLabels(targets, np.array([True, True]))
            loss = bce_loss(Tensor(logits), labels)
        assert loss.item() < 1e-8

    def test_masked_rows_bitwise_exact(self, rng):
        with precision("float64"):
            logits_all = rng.standard_normal((4, 6))
            targets = (rng.random((4, 6)) < 0.4).astype(np.uint8)
            mask = np.array([True, False, True, False])
            targets_masked = targets * mask[:, None].astype(np.uint8)
            full = bce_loss(Tensor(logits_all), BatchLabels(targets_masked, mask))
            sub = bce_loss(Tensor(logits_all[mask]),
                           BatchLabels(targets[mask], np.array([True, True])))
        assert full.item() == sub.item()  # bit-for-bit

    def test_unlabeled_batch_rejected(self):
        labels = BatchLabels(np.zeros((2, 3), dtype=np.uint8), np.array([False, False]))
        with pytest.raises(ValueError, match="no labeled"):
            bce_loss(Tensor(np.zeros((2, 3))), labels)

    def test_shape_mismatch_rejected(self):
        labels = BatchLabels(np.zeros((2, 3), dtype=np.uint8), np.array([True, True]))
        with pytest.raises(ValueError, match="match"):
            bce_loss(Tensor(np.zeros((2, 4))), labels)

    def test_non_negative_and_positive_when_wrong(self, rng):
        with precision("float64"):
            targets = (rng.random((3, 5)) < 0.5).astype(np.uint8)
            logits = rng.standard_normal((3, 5))
            labels = BatchLabels(targets, np.ones(3, dtype=bool))
            loss = bce_loss(Tensor(logits), labels)
        assert loss.item() > 0

    def test_gradient_closed_form(self, rng):
        # d/dz = (sigmoid(z) - y) / (B_l * M) on labeled rows, 0 elsewhere
        with precision("float64"):
            z = rng.standard_normal((4, 5))
            targets = (rng.random((4, 5)) < 0.4).astype(np.uint8)
            mask = np.array([True, True, False, True])
            targets = targets * mask[:, None].astype(np.uint8)
            logits = Tensor(z, requires_grad=True)
            loss = bce_loss(logits, BatchLabels(targets, mask))
            backward(loss)
        sig = 1.0 / (1.0 + np.exp(-z))
        expected = (sig - targets) * mask[:, None] / (3 * 5)
        np.testing.assert_allclose(logits.grad, expected, atol=1e-12)
