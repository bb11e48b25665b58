import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import gradient_mismatch, numeric_gradient
from twinreg.nn import (LayerSpec, Network, ShapeError, StaleCacheError, backward, dropout_masks, forward,
                        mlp_layers, mse_gradient, mse_loss_with_l2, penultimate_activations, weight_penalty)
from twinreg.optim import Adadelta, NonFiniteGradientError, RMSprop, make_optimizer
from twinreg.training import BatchRunner, TrainConfig


def two_layer_net():
    net = Network([LayerSpec(2, 2, "relu"), LayerSpec(2, 1, "identity")])
    net.weights[0][...] = [[1.0, 2.0], [-1.0, 0.5]]
    net.biases[0][...] = [0.5, -2.0]
    net.weights[1][...] = [[2.0], [-3.0]]
    net.biases[1][...] = [0.25]
    return net


class TestForward:
    def test_zero_network_outputs_zero(self, rng):
        net = Network(mlp_layers(7))
        out, _ = forward(net, rng.normal(size=(5, 7)))
        assert np.all(out == 0.0)

    def test_identity_layer(self):
        net = Network([LayerSpec(1, 1, "identity")], np.array([1.0, 0.0]))
        assert forward(net, [3.5])[0][0] == 3.5

    def test_hand_evaluated_two_layer(self):
        # z1 = [1*1 + (-1)(-1) + 0.5, 1*2 + (-1)(0.5) - 2] = [2.5, -0.5]
        # relu -> [2.5, 0];  out = 2.5*2 + 0*(-3) + 0.25 = 5.25
        out, _ = forward(two_layer_net(), [1.0, -1.0])
        assert out.shape == (1,)
        assert out[0] == pytest.approx(5.25, abs=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            forward(Network(mlp_layers(3)), np.zeros(4))

    def test_bad_mask_shape(self):
        net = Network(mlp_layers(3, (4,)))
        with pytest.raises(ShapeError):
            forward(net, np.zeros((2, 3)), [None, np.ones((2, 5))])

    def test_layer_chain_checked(self):
        with pytest.raises(ShapeError):
            Network([LayerSpec(2, 3), LayerSpec(4, 1, "identity")])

    def test_final_layer_must_be_scalar_identity(self):
        with pytest.raises(ValueError):
            Network([LayerSpec(2, 1, "relu")])


class TestBackward:
    def test_zero_output_gradient(self, rng):
        net = Network.glorot(mlp_layers(4), rng)
        X = rng.normal(size=(3, 4))
        _, cache = forward(net, X)
        assert np.all(backward(net, cache, np.zeros(3)) == 0.0)

    def test_linear_mse_closed_form(self):
        net = Network([LayerSpec(3, 1, "identity")], np.array([0.5, -1.0, 2.0, 0.1]))
        x, target = np.array([1.0, 2.0, -0.5]), 0.3
        pred = 0.5 - 2.0 - 1.0 + 0.1
        _, grad = mse_gradient(net, x[None, :], np.array([target]))
        expected = np.concatenate([2 * (pred - target) * x, [2 * (pred - target)]])
        np.testing.assert_allclose(grad, expected, rtol=1e-14)

    def test_relu_subgradient_at_zero_is_zero(self):
        net = Network([LayerSpec(1, 1, "relu"), LayerSpec(1, 1, "identity")], np.array([1.0, 0.0, 1.0, 0.0]))
        _, grad = mse_gradient(net, np.array([[0.0]]), np.array([1.0]))
        assert grad[0] == 0.0 and grad[1] == 0.0

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        net = Network.glorot(mlp_layers(10), rng)
        net.flat += 0.05 * rng.normal(size=net.flat.size)
        X, t = rng.uniform(-1, 1, size=(4, 10)), rng.normal(size=4)
        _, grad = mse_gradient(net, X, t)
        assert gradient_mismatch(grad, numeric_gradient(net, X, t)).size == 0

    def test_masked_gradient_matches_finite_differences(self, rng):
        net = Network.glorot(mlp_layers(5, (8, 8)), rng)
        # nonzero biases keep fully-dropped rows off the relu kink
        net.flat += 0.05 * rng.normal(size=net.flat.size)
        X, t = rng.uniform(-1, 1, size=(3, 5)), rng.normal(size=3)
        masks = dropout_masks(net, 3, 0.3, rng, include_input=True)
        _, grad = mse_gradient(net, X, t, masks=masks)
        base = net.flat.copy()
        num = np.empty_like(base)
        for p in range(base.size):
            vals = []
            for h in (1e-5, -1e-5):
                net.flat[p] = base[p] + h
                vals.append(np.mean((forward(net, X, masks)[0] - t) ** 2))
            net.flat[p] = base[p]
            num[p] = (vals[0] - vals[1]) / 2e-5
        assert gradient_mismatch(grad, num).size == 0

    def test_stale_cache_rejected(self, rng):
        net = Network.glorot(mlp_layers(3), rng)
        _, cache = forward(net, np.zeros((1, 3)))
        Adadelta(net.flat.size).step(net, np.ones_like(net.flat))
        with pytest.raises(StaleCacheError):
            backward(net, cache, np.ones(1))

    def test_foreign_cache_rejected(self, rng):
        a, b = Network.glorot(mlp_layers(3), rng), Network.glorot(mlp_layers(3), rng)
        _, cache = forward(a, np.zeros((1, 3)))
        with pytest.raises(StaleCacheError):
            backward(b, cache, np.ones(1))


class TestLoss:
    def test_perfect_predictions(self):
        assert mse_loss_with_l2([1.0, 2.0], [1.0, 2.0]) == 0.0

    def test_arithmetic(self):
        assert mse_loss_with_l2([1.0, 3.0], [0.0, 1.0]) == 2.5

    def test_l2_term_excludes_biases(self):
        net = Network([LayerSpec(1, 1, "identity")], np.array([2.0, 7.0]))
        assert mse_loss_with_l2([0.0], [0.0], net, 0.01) == pytest.approx(4 * 0.01)

    def test_empty_batch(self):
        with pytest.raises(ValueError):
            mse_loss_with_l2([], [])


class TestOptimizers:
    def test_zero_gradient_decays_accumulators(self):
        net = Network([LayerSpec(2, 1, "identity")], np.array([1.0, -2.0, 0.5]))
        opt = Adadelta(3)
        opt.sq_grad[:] = 4.0
        opt.sq_update[:] = 2.0
        before = net.flat.copy()
        opt.step(net, np.zeros(3))
        np.testing.assert_array_equal(net.flat, before)
        np.testing.assert_allclose(opt.sq_grad, 0.95 * 4.0)
        np.testing.assert_allclose(opt.sq_update, 0.95 * 2.0)

    def test_first_adadelta_step(self):
        net = Network([LayerSpec(1, 1, "identity")], np.zeros(2))
        update = Adadelta(2, rho=0.95, epsilon=1e-6).step(net, np.ones(2))
        # E[g^2] = 0.05 after one step; E[dx^2] still 0
        expected = -math.sqrt(1e-6) / math.sqrt(0.05 + 1e-6)
        np.testing.assert_allclose(update, expected, rtol=1e-14)

    def test_rmsprop_constant_gradient_step_tends_to_lr(self):
        net = Network([LayerSpec(1, 1, "identity")], np.zeros(2))
        opt = RMSprop(2, learning_rate=1e-3)
        for _ in range(400):
            update = opt.step(net, np.full(2, 0.7))
        # fixed point E[g^2] = g^2  =>  |step| = lr * g / sqrt(g^2 + eps)
        np.testing.assert_allclose(np.abs(update), 1e-3 * 0.7 / math.sqrt(0.49 + 1e-7), rtol=1e-12)
        np.testing.assert_allclose(np.abs(update), 1e-3, rtol=1e-6)

    def test_nonfinite_gradient_names_block(self):
        net = Network(mlp_layers(2, (3,)))
        grad = np.zeros_like(net.flat)
        grad[2 * 3 + 1] = np.nan  # layer 0 bias
        with pytest.raises(NonFiniteGradientError, match="layer 0 bias"):
            Adadelta(net.flat.size).step(net, grad)

    def test_unknown_optimizer(self):
        with pytest.raises(ValueError):
            make_optimizer("sgd", 3)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000), l2=st.sampled_from([1e-6, 1e-5, 1e-4, 1e-3]),
           kind=st.sampled_from(["adadelta", "rmsprop"]))
    def test_l2_step_never_increases_penalty(self, seed, l2, kind):
        rng = np.random.default_rng(seed)
        net = Network.glorot(mlp_layers(4, (8,)), rng)
        opt = make_optimizer(kind, net.flat.size)
        for _ in range(5):
            before = weight_penalty(net)
            opt.step(net, 2 * l2 * net.weight_mask() * net.flat)
            assert weight_penalty(net) <= before


class TestPenultimate:
    def test_zero_network(self):
        act = penultimate_activations(Network(mlp_layers(10)), np.ones(10))
        assert act.shape == (64,) and np.all(act == 0.0)

    def test_identity_toy_net(self):
        net = Network([LayerSpec(2, 2, "relu"), LayerSpec(2, 1, "identity")])
        net.weights[0][...] = np.eye(2)
        net.biases[0][...] = [0.0, -1.0]
        np.testing.assert_array_equal(penultimate_activations(net, [1.0, -2.0]), [1.0, 0.0])

    def test_deterministic(self, rng):
        net = Network.glorot(mlp_layers(3), rng)
        x = rng.normal(size=3)
        np.testing.assert_array_equal(penultimate_activations(net, x), penultimate_activations(net, x))

    def test_single_layer_rejected(self):
        with pytest.raises(ValueError):
            penultimate_activations(Network([LayerSpec(2, 1, "identity")]), [0.0, 0.0])


def test_dropout_expectation_linear_layer(rng):
    net = Network([LayerSpec(6, 1, "identity")])
    net.flat[:] = rng.normal(size=7)
    x = rng.uniform(-1, 1, size=(1, 6))
    clean = forward(net, x)[0][0]
    draws = np.array([forward(net, x, dropout_masks(net, 1, 0.3, rng, include_input=True))[0][0]
                      for _ in range(10_000)])
    stderr = draws.std(ddof=1) / math.sqrt(draws.size)
    assert abs(draws.mean() - clean) < 3 * stderr


def test_dropout_rate_validated(rng):
    with pytest.raises(ValueError):
        dropout_masks(Network(mlp_layers(2)), 1, 1.0, rng)


@pytest.mark.parametrize("twin", [True, False])
@pytest.mark.parametrize("kind,l2", [("adadelta", 0.0), ("rmsprop", 1e-3), ("adadelta", 1e-4)])
def test_compiled_kernel_matches_numpy_path(twin, kind, l2):
    rng = np.random.default_rng(7)
    X, y = rng.uniform(-1, 1, size=(12, 3)), rng.normal(size=12)
    d_in = 6 if twin else 3
    I, J = rng.integers(0, 12, size=70), rng.integers(0, 12, size=70)
    config = TrainConfig(batch_size=8, l2_penalty=l2, optimizer=kind)
    nets = []
    for compiled in (True, False):
        net = Network.glorot(mlp_layers(d_in, (16, 16)), np.random.default_rng(3))
        runner = BatchRunner(net, config.make_optimizer(net.flat.size), X, y, twin, config,
                             np.random.default_rng(0))
        runner.compiled = compiled
        loss = runner.run(I, J, epoch=1)
        nets.append((net, loss, runner.opt))
    (a, la, oa), (b, lb, ob) = nets
    np.testing.assert_allclose(a.flat, b.flat, rtol=1e-10, atol=1e-13)
    np.testing.assert_allclose(oa.sq_grad, ob.sq_grad, rtol=1e-10, atol=1e-16)
    assert la == pytest.approx(lb, rel=1e-10)
