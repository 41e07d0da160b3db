import math

import numpy as np
import pytest

from mtdta import losses, tensor as T
from mtdta.losses import LodeState, TaskBatchLabels


def labels(values, mask):
    return TaskBatchLabels(values=np.asarray(values, dtype=float),
                           present_mask=np.asarray(mask, dtype=float))


class TestMaskedMse:
    def test_single_present_exact(self):
        pred = T.Tensor([1.0, 2.0])
        assert losses.masked_mse(pred, labels([1.0, 0.0], [1, 0])).item() == 0.0

    def test_single_present_error(self):
        pred = T.Tensor([2.0, 5.0])
        assert losses.masked_mse(pred, labels([1.0, 0.0], [1, 0])).item() == 1.0

    def test_all_missing_zero_loss_zero_grad(self):
        pred = T.Tensor([3.0, -1.0], requires_grad=True)
        loss = losses.masked_mse(pred, labels([0.0, 0.0], [0, 0]))
        assert loss.item() == 0.0
        assert not loss._tracked()

    def test_missing_value_never_read(self):
        pred = T.Tensor([2.0, 5.0])
        with_nan = labels([1.0, np.nan], [1, 0])
        assert losses.masked_mse(pred, with_nan).item() == 1.0

    def test_zero_gradient_at_missing_positions(self):
        pred = T.Tensor([2.0, 5.0, 7.0], requires_grad=True)
        loss = losses.masked_mse(pred, labels([1.0, 0.0, 6.0], [1, 0, 1]))
        (g,) = T.gradients(loss, [pred])
        assert g[1] == 0.0
        assert g[0] != 0.0 and g[2] != 0.0


class TestMaskedBce:
    def test_half_prediction(self):
        pred = T.Tensor([0.5])
        loss = losses.masked_bce(pred, labels([1.0], [1]))
        assert loss.item() == pytest.approx(math.log(2.0))

    def test_clamp_keeps_loss_finite(self):
        pred = T.Tensor([0.0])
        loss = losses.masked_bce(pred, labels([1.0], [1]))
        assert math.isfinite(loss.item())
        assert loss.item() == pytest.approx(-math.log(1e-12))

    def test_all_missing(self):
        pred = T.Tensor([0.3, 0.7])
        assert losses.masked_bce(pred, labels([0, 0], [0, 0])).item() == 0.0

    def test_masked_positions_no_gradient(self):
        pred = T.Tensor([0.3, 0.7], requires_grad=True)
        loss = losses.masked_bce(pred, labels([1.0, 0.0], [1, 0]))
        (g,) = T.gradients(loss, [pred])
        assert g[1] == 0.0


class TestLode:
    def test_discounted_propagation(self):
        state = LodeState(gamma=0.5)
        pred_a = T.Tensor([1.0, 3.0])
        loss_a = losses.lode_loss(pred_a, labels([0.2, 2.2], [1, 1]), state)
        assert loss_a.item() == pytest.approx(0.64)
        loss_b = losses.lode_loss(T.Tensor([9.0]), labels([0.0], [0]), state)
        assert loss_b.item() == pytest.approx(0.32)
        assert not loss_b._tracked()

    def test_first_batch_fully_missing_contributes_zero(self):
        state = LodeState(gamma=0.5)
        loss = losses.lode_loss(T.Tensor([1.0]), labels([0.0], [0]), state)
        assert loss.item() == 0.0
        assert not state.observed_once

    def test_equals_masked_when_present(self):
        state = LodeState(gamma=0.9)
        pred = T.Tensor([2.0, 5.0])
        lab = labels([1.0, 4.0], [1, 1])
        assert losses.lode_loss(pred, lab, state).item() == \
            losses.masked_mse(pred, lab).item()

    def test_bce_kind(self):
        state = LodeState()
        loss = losses.lode_loss(T.Tensor([0.5]), labels([1.0], [1]), state,
                                kind="bce")
        assert loss.item() == pytest.approx(math.log(2.0))
        assert state.last_error == pytest.approx(math.log(2.0))

    def test_no_compounding_across_missing_batches(self):
        state = LodeState(gamma=0.5)
        losses.lode_loss(T.Tensor([2.0]), labels([1.0], [1]), state)  # loss 1.0
        first = losses.lode_loss(T.Tensor([0.0]), labels([0.0], [0]), state)
        second = losses.lode_loss(T.Tensor([0.0]), labels([0.0], [0]), state)
        assert first.item() == second.item() == 0.5

    def test_state_tracks_latest_observed(self):
        state = LodeState(gamma=1.0)
        stream = [([2.0], [1.0], [1]), ([0.0], [0.0], [0]),
                  ([4.0], [1.0], [1]), ([0.0], [0.0], [0])]
        observed = []
        for pred, vals, mask in stream:
            loss = losses.lode_loss(T.Tensor(pred), labels(vals, mask), state)
            if mask[0]:
                observed.append(loss.item())
            assert state.last_error == observed[-1]

    def test_gamma_validation(self):
        with pytest.raises(ValueError):
            LodeState(gamma=0.0)
        with pytest.raises(ValueError):
            LodeState(gamma=1.5)


class TestComposite:
    def seven(self, first=1.0):
        names = ("kd", "ki", "ic50", "ec50", "active", "ph", "qed")
        return {n: T.Tensor(first if i == 0 else 0.0)
                for i, n in enumerate(names)}

    def test_unit_weights(self):
        assert losses.composite_loss(self.seven()).item() == 1.0

    def test_doubling_one_weight(self):
        weights = {n: 1.0 for n in self.seven()}
        weights["kd"] = 2.0
        assert losses.composite_loss(self.seven(), weights).item() == 2.0

    def test_zero_weights(self):
        weights = {n: 0.0 for n in self.seven()}
        assert losses.composite_loss(self.seven(), weights).item() == 0.0

    def test_weight_name_mismatch(self):
        with pytest.raises(ValueError):
            losses.composite_loss(self.seven(), {"kd": 1.0})


def test_zero_leak_randomized_missingness():
    rng = np.random.default_rng(99)
    for _ in range(10):
        batch = 12
        pred = T.Tensor(rng.standard_normal(batch), requires_grad=True)
        # Table-3-like sparsity: mostly missing
        mask = (rng.random(batch) > 0.77).astype(float)
        lab = labels(rng.standard_normal(batch), mask)
        loss = losses.masked_mse(pred, lab)
        if not loss._tracked():
            continue
        (g,) = T.gradients(loss, [pred])
        assert np.all(np.abs(g[mask == 0]) < 1e-12)
