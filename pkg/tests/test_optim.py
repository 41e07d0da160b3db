import numpy as np
import pytest

from mtdta import optim
from mtdta.tensor import NonFiniteError, Tensor


# Independent scalar references, coded directly from the update formulas.

def adam_scalar(theta, grad_fn, lr, steps, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    trajectory = []
    for t in range(1, steps + 1):
        g = grad_fn(theta)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        theta -= lr * m_hat / (v_hat ** 0.5 + eps)
        trajectory.append(theta)
    return trajectory


def nadam_scalar(theta, grad_fn, lr, steps, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    trajectory = []
    for t in range(1, steps + 1):
        g = grad_fn(theta)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        theta -= lr * (b1 * m_hat + (1 - b1) * g / (1 - b1 ** t)) \
            / (v_hat ** 0.5 + eps)
        trajectory.append(theta)
    return trajectory


def make_params(value=1.0):
    return {"theta": Tensor(np.array([value]), requires_grad=True)}


def run(opt, grad_fn, steps):
    trajectory = []
    for _ in range(steps):
        g = grad_fn(float(opt.params["theta"].data[0]))
        opt.step({"theta": np.array([g])})
        trajectory.append(float(opt.params["theta"].data[0]))
    return trajectory


QUAD_GRAD = lambda x: x  # f = x^2 / 2


class TestAdam:
    def test_zero_gradient_no_change(self):
        params = make_params(2.5)
        optim.Adam(params, lr=0.1).step({"theta": np.zeros(1)})
        assert params["theta"].data[0] == 2.5

    def test_first_step_hand_value(self):
        params = make_params(1.0)
        optim.Adam(params, lr=0.001).step({"theta": np.ones(1)})
        assert params["theta"].data[0] == pytest.approx(1.0 - 0.001 / (1 + 1e-8),
                                                        rel=1e-12)

    def test_matches_scalar_oracle(self):
        params = make_params(1.0)
        ours = run(optim.Adam(params, lr=0.05), QUAD_GRAD, 50)
        ref = adam_scalar(1.0, QUAD_GRAD, 0.05, 50)
        assert np.allclose(ours, ref, atol=1e-12, rtol=0)

    def test_nonfinite_gradient_rejected(self):
        with pytest.raises(NonFiniteError):
            optim.Adam(make_params()).step({"theta": np.array([np.nan])})


class TestNadam:
    def test_zero_gradient_no_change(self):
        params = make_params(2.5)
        optim.Nadam(params, lr=0.1).step({"theta": np.zeros(1)})
        assert params["theta"].data[0] == 2.5

    def test_matches_scalar_oracle(self):
        params = make_params(1.0)
        ours = run(optim.Nadam(params, lr=0.05), QUAD_GRAD, 50)
        ref = nadam_scalar(1.0, QUAD_GRAD, 0.05, 50)
        assert np.allclose(ours, ref, atol=1e-12, rtol=0)

    def test_differs_from_adam_on_first_step(self):
        a = adam_scalar(1.0, QUAD_GRAD, 0.001, 1)[0]
        n = nadam_scalar(1.0, QUAD_GRAD, 0.001, 1)[0]
        assert a != n


class TestLookahead:
    def test_sync_arithmetic(self):
        # inner "optimizer" moves fast weights by +0.2 per step
        class Stub:
            def __init__(self, params):
                self.params = params

            def step(self, grads):
                self.params["theta"].data += 0.2

        params = make_params(0.0)
        la = optim.Lookahead(Stub(params), sync_period=3, alpha=0.5)
        for _ in range(3):
            la.step({})
        assert params["theta"].data[0] == pytest.approx(0.3)
        assert la.slow["theta"][0] == pytest.approx(0.3)

    def test_no_sync_before_period(self):
        params = make_params(1.0)
        la = optim.Lookahead(optim.Nadam(params, lr=0.1), sync_period=3)
        run(la, QUAD_GRAD, 2)
        assert np.array_equal(la.slow["theta"], [1.0])

    def test_sync_fires_every_three_steps(self):
        params = make_params(1.0)
        la = optim.Lookahead(optim.Nadam(params, lr=0.1), sync_period=3)
        snapshots = []
        for i in range(1, 10):
            la.step({"theta": np.array([float(params["theta"].data[0])])})
            synced = np.array_equal(la.slow["theta"], params["theta"].data)
            snapshots.append((i, synced))
        for i, synced in snapshots:
            assert synced == (i % 3 == 0)

    def test_alpha_one_identical_to_inner(self):
        params_a = make_params(1.0)
        inner_only = run(optim.Nadam(params_a, lr=0.05), QUAD_GRAD, 30)
        params_b = make_params(1.0)
        wrapped = run(optim.Lookahead(optim.Nadam(params_b, lr=0.05),
                                      sync_period=3, alpha=1.0),
                      QUAD_GRAD, 30)
        assert inner_only == wrapped

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            optim.Lookahead(optim.Adam(make_params()), sync_period=0)
        with pytest.raises(ValueError):
            optim.Lookahead(optim.Adam(make_params()), alpha=0.0)


class TestConvexDescent:
    @pytest.mark.parametrize("kind", ["adam", "nadam", "lookahead_nadam"])
    def test_quadratic_halves(self, kind):
        rng = np.random.default_rng(4)
        target = rng.standard_normal(5)
        params = {"theta": Tensor(target + rng.standard_normal(5),
                                  requires_grad=True)}
        f0 = 0.5 * float(((params["theta"].data - target) ** 2).sum())
        opt = optim.make_optimizer(params, kind=kind, lr=0.01)
        for _ in range(200):
            opt.step({"theta": params["theta"].data - target})
        f_end = 0.5 * float(((params["theta"].data - target) ** 2).sum())
        assert f_end < 0.5 * f0

    def test_determinism(self):
        def trajectory():
            params = make_params(1.0)
            return run(optim.make_optimizer(params, kind="lookahead_nadam",
                                            lr=0.01), QUAD_GRAD, 40)

        assert trajectory() == trajectory()


def test_clip_norm():
    params = make_params(0.0)
    opt = optim.Adam(params, lr=1.0, clip_norm=1.0)
    opt.step({"theta": np.array([100.0])})
    unclipped = make_params(0.0)
    opt2 = optim.Adam(unclipped, lr=1.0)
    opt2.step({"theta": np.array([1.0])})
    # after clipping, the effective gradient is the unit-norm one
    assert params["theta"].data[0] == pytest.approx(unclipped["theta"].data[0])
