"""Tests for the neural precoder: layers, model, losses, optimizer, training,
and checkpoints.  Gradients are checked against central finite differences;
the convolution forward is checked against a quadruple-loop oracle."""

import dataclasses
import struct

import numpy as np
import pytest

from slpnet.constellation import enumerate_reduced_symbol_vectors, make_constellation, qos_matrix
from slpnet.network import (
    EPNN,
    AdamState,
    CheckpointFormatError,
    ConvSpec,
    NetworkSpec,
    TrainConfig,
    adam_step,
    batch_margins,
    effective_lr,
    forward,
    infer,
    load_checkpoint,
    load_train_state,
    save_checkpoint,
    save_train_state,
    supervised_loss,
    supervised_value_and_grad,
    train,
    unsupervised_loss,
    unsupervised_value_and_grad,
)
from slpnet.network.layers import BatchNorm, Conv2d, Dense, ReLU, conv_out_shape, same_pad_amount

import oracles
from conftest import complex_normal


def fd_grad(f, x, h=1e-6):
    """Central-difference gradient of scalar ``f`` over every entry of ``x``."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        fp = f()
        x[idx] = orig - h
        fm = f()
        x[idx] = orig
        g[idx] = (fp - fm) / (2.0 * h)
    return g


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------


class TestSamePadding:
    def test_no_padding_needed(self):
        assert same_pad_amount(4, 2, 2) == (2, 0, 0)

    def test_even_split(self):
        assert same_pad_amount(5, 3, 2) == (3, 1, 1)

    def test_odd_total_pads_after(self):
        assert same_pad_amount(2, 2, 1) == (2, 0, 1)

    def test_stride_larger_than_kernel(self):
        assert same_pad_amount(3, 2, 3) == (1, 0, 0)

    def test_unit_axis(self):
        assert same_pad_amount(1, 1, 1) == (1, 0, 0)

    def test_conv_out_shape(self):
        assert conv_out_shape((5, 4), (3, 2), (2, 2)) == (3, 2)
        assert conv_out_shape((2, 3), (2, 1), (2, 1)) == (1, 3)


class TestDense:
    def test_forward_is_affine(self, rng):
        layer = Dense(3, 5, rng)
        x = rng.standard_normal((4, 3))
        assert layer.forward(x, training=True) == pytest.approx(x @ layer.W + layer.b)

    def test_gradients_match_finite_differences(self, rng):
        layer = Dense(3, 4, rng)
        x = rng.standard_normal((5, 3))
        w = rng.standard_normal((5, 4))

        def f():
            return float(np.sum(w * layer.forward(x, training=True)))

        f()  # populate the cache
        dx = layer.backward(w)
        assert dx == pytest.approx(fd_grad(f, x), abs=1e-8)
        assert layer.dW == pytest.approx(fd_grad(f, layer.W), abs=1e-8)
        assert layer.db == pytest.approx(fd_grad(f, layer.b), abs=1e-8)

    def test_backward_accumulates(self, rng):
        layer = Dense(2, 2, rng)
        x = rng.standard_normal((3, 2))
        dy = rng.standard_normal((3, 2))
        layer.forward(x, training=True)
        layer.backward(dy)
        first = layer.dW.copy()
        layer.forward(x, training=True)
        layer.backward(dy)
        assert layer.dW == pytest.approx(2.0 * first)


class TestConv2d:
    @pytest.mark.parametrize(
        "in_shape,filters,kernel,stride",
        [
            ((2, 2, 3, 5), 3, (2, 3), (1, 2)),
            ((2, 2, 2, 2), 4, (2, 1), (2, 1)),
            ((1, 3, 4, 4), 2, (3, 3), (2, 2)),
        ],
    )
    def test_forward_matches_naive_loops(self, rng, in_shape, filters, kernel, stride):
        layer = Conv2d(in_shape[1], filters, kernel, stride, rng)
        x = rng.standard_normal(in_shape)
        y = layer.forward(x, training=True)
        expected = oracles.conv2d_same_naive(x, layer.W, layer.b, stride)
        assert y.shape == expected.shape
        assert y == pytest.approx(expected, abs=1e-12)

    def test_gradients_match_finite_differences(self, rng):
        layer = Conv2d(2, 3, (2, 2), (1, 2), rng)
        x = rng.standard_normal((2, 2, 3, 4))
        layer.forward(x, training=True)
        w = rng.standard_normal((2, 3, 3, 2))

        def f():
            return float(np.sum(w * layer.forward(x, training=True)))

        dx = layer.backward(w)
        layer.dW[...] = 0.0
        layer.db[...] = 0.0
        layer.forward(x, training=True)
        layer.backward(w)
        assert dx == pytest.approx(fd_grad(f, x), abs=1e-8)
        assert layer.dW == pytest.approx(fd_grad(f, layer.W), abs=1e-8)
        assert layer.db == pytest.approx(fd_grad(f, layer.b), abs=1e-8)


class TestBatchNorm:
    def test_training_normalizes_batch(self, rng):
        bn = BatchNorm(4)
        x = rng.standard_normal((64, 4)) * 3.0 + 1.5
        y = bn.forward(x, training=True)
        assert y.mean(axis=0) == pytest.approx(np.zeros(4), abs=1e-12)
        assert y.var(axis=0) == pytest.approx(np.ones(4), rel=1e-3)

    def test_running_statistics_update(self, rng):
        bn = BatchNorm(3)
        x = rng.standard_normal((32, 3)) + 2.0
        bn.forward(x, training=True)
        assert bn.running_mean == pytest.approx(0.01 * x.mean(axis=0), rel=1e-12)
        assert bn.running_var == pytest.approx(0.99 + 0.01 * x.var(axis=0), rel=1e-12)

    def test_train_and_infer_agree_on_matched_statistics(self, rng):
        # With running statistics set to the batch statistics, inference
        # reproduces the training-mode output exactly.
        bn = BatchNorm(5)
        x = rng.standard_normal((40, 5)) * 2.0 - 1.0
        y_train = bn.forward(x, training=True)
        bn.running_mean[...] = x.mean(axis=0)
        bn.running_var[...] = x.var(axis=0)
        y_infer = bn.forward(x, training=False)
        assert np.max(np.abs(y_train - y_infer)) < 1e-10

    def test_inference_does_not_touch_statistics(self, rng):
        bn = BatchNorm(3)
        before = (bn.running_mean.copy(), bn.running_var.copy())
        bn.forward(rng.standard_normal((8, 3)), training=False)
        assert np.array_equal(bn.running_mean, before[0])
        assert np.array_equal(bn.running_var, before[1])

    def test_training_backward_matches_finite_differences(self, rng):
        bn = BatchNorm(3)
        bn.gamma[...] = rng.uniform(0.5, 1.5, 3)
        bn.beta[...] = rng.standard_normal(3)
        x = rng.standard_normal((6, 3))
        w = rng.standard_normal((6, 3))

        def f():
            return float(np.sum(w * bn.forward(x, training=True)))

        f()
        dx = bn.backward(w)
        bn.dgamma[...] = 0.0
        bn.dbeta[...] = 0.0
        f()
        bn.backward(w)
        assert dx == pytest.approx(fd_grad(f, x), abs=1e-7)
        assert bn.dgamma == pytest.approx(fd_grad(f, bn.gamma), abs=1e-7)
        assert bn.dbeta == pytest.approx(fd_grad(f, bn.beta), abs=1e-7)

    def test_four_dimensional_input_normalizes_per_channel(self, rng):
        bn = BatchNorm(3)
        x = rng.standard_normal((4, 3, 2, 5)) * 2.0 + 1.0
        y = bn.forward(x, training=True)
        mean = x.mean(axis=(0, 2, 3), keepdims=True)
        var = x.var(axis=(0, 2, 3), keepdims=True)
        assert y == pytest.approx((x - mean) / np.sqrt(var + bn.eps), abs=1e-12)

    def test_rejects_other_ranks(self, rng):
        with pytest.raises(ValueError, match="2-D or 4-D"):
            BatchNorm(2).forward(rng.standard_normal((3, 2, 2)), training=True)


class TestReLU:
    def test_forward_clamps_negatives(self):
        relu = ReLU()
        x = np.array([[-1.5, 0.0, 2.5]])
        assert relu.forward(x, training=True) == pytest.approx(np.array([[0.0, 0.0, 2.5]]))

    def test_backward_masks_gradient(self):
        relu = ReLU()
        x = np.array([[-1.0, 3.0], [0.5, -2.0]])
        relu.forward(x, training=True)
        dy = np.ones_like(x)
        assert relu.backward(dy) == pytest.approx(np.array([[0.0, 1.0], [1.0, 0.0]]))


# ---------------------------------------------------------------------------
# architecture spec
# ---------------------------------------------------------------------------


class TestNetworkSpec:
    def test_default_architecture(self):
        spec = NetworkSpec(users=3, antennas=4, order=4)
        assert spec.conv_layers == (
            ConvSpec(256, (3, 1), (3, 1)),
            ConvSpec(256, (1, 1), (1, 1)),
            ConvSpec(256, (1, 1), (1, 1)),
        )
        assert spec.branch_widths == (2048, 8192, 2048, 8192, 2048)
        assert spec.num_branches == 2
        assert spec.residual_links == ((3, 5),)

    def test_derived_shapes(self):
        spec = NetworkSpec(users=3, antennas=4, order=4)
        assert spec.n_par == 16
        assert spec.input_shape == (2, 3, 4)
        assert spec.output_dim == 2 * 4 * 16

    def test_desk_variant_scales_widths(self):
        spec = NetworkSpec.desk(3, 4, 4, conv_filters=32, width=128)
        assert spec.conv_layers[0] == ConvSpec(32, (3, 1), (3, 1))
        assert spec.branch_widths == (128, 256, 128, 256, 128)
        assert spec.trunk_width == 128

    def test_validate_accepts_default(self, tiny_spec):
        tiny_spec.validate()

    @pytest.mark.parametrize(
        "overrides,match",
        [
            (dict(users=0), "positive"),
            (dict(order=1), "order"),
            (dict(power_budget=0.0), "power_budget"),
            (dict(num_branches=0), "branch"),
            (dict(branch_widths=(8, 0, 8)), "widths"),
            (dict(trunk_width=0), "trunk"),
            (dict(scaling_mode="clip"), "scaling_mode"),
        ],
    )
    def test_validate_rejects(self, overrides, match):
        base = dict(users=2, antennas=2, order=4, branch_widths=(8, 8), residual_links=())
        base.update(overrides)
        with pytest.raises(ValueError, match=match):
            NetworkSpec(**base).validate()

    def test_rejects_residual_out_of_range(self):
        spec = NetworkSpec(
            users=2, antennas=2, order=4, branch_widths=(8, 8), residual_links=((1, 3),)
        )
        with pytest.raises(ValueError, match="out of range"):
            spec.validate()

    def test_rejects_residual_width_mismatch(self):
        spec = NetworkSpec(
            users=2, antennas=2, order=4, branch_widths=(8, 16), residual_links=((1, 2),)
        )
        with pytest.raises(ValueError, match="incompatible widths"):
            spec.validate()

    def test_rejects_non_same_padding(self):
        spec = NetworkSpec(
            users=2,
            antennas=2,
            order=4,
            conv_layers=(ConvSpec(4, (2, 1), (2, 1), padding="valid"),),
            branch_widths=(8,),
            residual_links=(),
        )
        with pytest.raises(ValueError, match="padding"):
            spec.validate()


# ---------------------------------------------------------------------------
# the model
# ---------------------------------------------------------------------------


class TestEPNN:
    def test_initialization_is_deterministic(self, tiny_spec):
        a = EPNN(tiny_spec, init_seed=7)
        b = EPNN(tiny_spec, init_seed=7)
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert np.array_equal(pa, pb)

    def test_seeds_differ(self, tiny_spec):
        a = EPNN(tiny_spec, init_seed=7)
        b = EPNN(tiny_spec, init_seed=8)
        assert any(
            not np.array_equal(pa, pb) for pa, pb in zip(a.parameters(), b.parameters())
        )

    def test_forward_shapes(self, tiny_spec, rng):
        model = EPNN(tiny_spec, init_seed=1)
        H = complex_normal(rng, (5, 2, 2))
        X = model.forward(H, training=False)
        assert X.shape == (5, 2, 4)
        assert X.dtype == np.complex128

    def test_forward_wrapper_accepts_single_channel(self, tiny_spec, rng):
        model = EPNN(tiny_spec, init_seed=1)
        H = complex_normal(rng, (2, 2))
        single = forward(model, H)
        batched = model.forward(H[None], training=False)[0]
        assert np.array_equal(single, batched)

    def test_forward_rejects_wrong_shape(self, tiny_spec, rng):
        model = EPNN(tiny_spec, init_seed=1)
        with pytest.raises(ValueError, match="channel batch"):
            model.forward(complex_normal(rng, (5, 3, 2)), training=False)

    def test_zero_parameters_give_zero_output(self, tiny_spec, rng):
        model = EPNN(tiny_spec, init_seed=1)
        model.load_parameters([np.zeros_like(p) for p in model.parameters()])
        X = model.forward(complex_normal(rng, (3, 2, 2)), training=False)
        assert np.all(X == 0)
        assert np.all(np.isfinite(X))

    def test_nonfinite_conv_activation_names_layer(self, tiny_spec, rng):
        model = EPNN(tiny_spec, init_seed=1)
        model.conv_blocks[0].core.W[0, 0, 0, 0] = np.inf
        with pytest.raises(FloatingPointError, match="CL-1"):
            model.forward(complex_normal(rng, (2, 2, 2)), training=True)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_nonfinite_head_output_is_reported(self, tiny_spec, rng):
        model = EPNN(tiny_spec, init_seed=1)
        model.head.W[...] = np.inf
        with pytest.raises(FloatingPointError, match="output head"):
            model.forward(complex_normal(rng, (2, 2, 2)), training=True)

    def test_backward_requires_forward(self, tiny_spec):
        model = EPNN(tiny_spec, init_seed=1)
        with pytest.raises(RuntimeError, match="before forward"):
            model.backward(np.zeros((1, 2, 4), dtype=np.complex128))

    def test_load_parameters_validates_count_and_shape(self, tiny_spec):
        model = EPNN(tiny_spec, init_seed=1)
        params = model.parameters()
        with pytest.raises(ValueError, match="parameter tensors"):
            model.load_parameters(params[:-1])
        bad = [p.copy() for p in params]
        bad[0] = np.zeros((1, 1))
        with pytest.raises(ValueError, match="shape mismatch"):
            model.load_parameters(bad)

    def test_zero_grad_clears_accumulators(self, tiny_spec, rng):
        model = EPNN(tiny_spec, init_seed=1)
        H = complex_normal(rng, (4, 2, 2))
        X = model.forward(H, training=True)
        model.backward(np.ones_like(X))
        assert any(np.any(g != 0) for g in model.gradients())
        model.zero_grad()
        assert all(np.all(g == 0) for g in model.gradients())


class TestScaling:
    @staticmethod
    def _unit_model():
        spec = NetworkSpec(
            users=1,
            antennas=1,
            order=2,
            conv_layers=(ConvSpec(2, (1, 1), (1, 1)),),
            branch_widths=(4,),
            num_branches=1,
            trunk_width=2,
            residual_links=(),
        )
        return EPNN(spec, init_seed=0)

    def test_norm_above_budget_clamps(self):
        # With a unit budget, Frobenius norm 2 scales down to power 1.
        model = self._unit_model()
        x_temp = np.array([[[2.0 + 0.0j]]])
        x_hat, _ = model._scale_forward(x_temp)
        assert np.abs(x_hat[0, 0, 0]) ** 2 == pytest.approx(1.0, abs=1e-12)

    def test_norm_below_budget_keeps_norm_as_power(self):
        model = self._unit_model()
        x_temp = np.array([[[0.5 + 0.0j]]])
        x_hat, _ = model._scale_forward(x_temp)
        assert np.abs(x_hat[0, 0, 0]) ** 2 == pytest.approx(0.5, abs=1e-12)

    def test_power_identity_randomized(self, tiny_spec, rng):
        model = EPNN(tiny_spec, init_seed=1)
        budget = tiny_spec.power_budget * tiny_spec.n_par
        x_temp = complex_normal(rng, (16, 2, 4), scale=2.0)
        x_hat, _ = model._scale_forward(x_temp)
        r = np.linalg.norm(x_temp.reshape(16, -1), axis=1)
        power = np.sum(np.abs(x_hat) ** 2, axis=(1, 2))
        assert power == pytest.approx(np.minimum(r, budget), abs=1e-12)

    def test_ball_mode_projects_onto_ball(self, tiny_spec, rng):
        spec = dataclasses.replace(tiny_spec, scaling_mode="ball")
        model = EPNN(spec, init_seed=1)
        budget = spec.power_budget * spec.n_par
        x_temp = complex_normal(rng, (16, 2, 4), scale=2.0)
        x_hat, _ = model._scale_forward(x_temp)
        r2 = np.sum(np.abs(x_temp) ** 2, axis=(1, 2))
        power = np.sum(np.abs(x_hat) ** 2, axis=(1, 2))
        assert power == pytest.approx(np.minimum(r2, budget), abs=1e-12)

    def test_zero_input_stays_zero(self, tiny_spec):
        model = EPNN(tiny_spec, init_seed=1)
        x_hat, _ = model._scale_forward(np.zeros((2, 2, 4), dtype=np.complex128))
        assert np.all(x_hat == 0)
        assert np.all(np.isfinite(x_hat))

    @pytest.mark.parametrize("scale", [0.3, 3.0])
    def test_backward_matches_finite_differences(self, tiny_spec, rng, scale):
        # Both branches of the piecewise scaling rule (r below and above
        # the budget) must backpropagate exactly.
        model = EPNN(tiny_spec, init_seed=1)
        x_re = rng.standard_normal((2, 2, 4)) * scale
        x_im = rng.standard_normal((2, 2, 4)) * scale
        a_re = rng.standard_normal((2, 2, 4))
        a_im = rng.standard_normal((2, 2, 4))

        def f():
            x_hat, _ = model._scale_forward(x_re + 1j * x_im)
            return float(np.sum(a_re * x_hat.real + a_im * x_hat.imag))

        _, cache = model._scale_forward(x_re + 1j * x_im)
        G = model._scale_backward(a_re + 1j * a_im, cache)
        assert G.real == pytest.approx(fd_grad(f, x_re), abs=1e-6)
        assert G.imag == pytest.approx(fd_grad(f, x_im), abs=1e-6)

    def test_infer_is_power_feasible(self, tiny_spec, rng):
        model = EPNN(tiny_spec, init_seed=3)
        budget = tiny_spec.power_budget * tiny_spec.n_par
        X = infer(model, complex_normal(rng, (64, 2, 2)))
        power = np.sum(np.abs(X) ** 2, axis=(1, 2))
        assert np.all(power <= budget + 1e-9)

    def test_infer_is_idempotent(self, tiny_spec, rng):
        model = EPNN(tiny_spec, init_seed=3)
        H = complex_normal(rng, (8, 2, 2))
        assert np.array_equal(infer(model, H), infer(model, H))


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


class TestBatchMargins:
    def test_matches_qos_matrix_per_sample(self, qpsk, rng):
        H = complex_normal(rng, (3, 2, 2))
        X = complex_normal(rng, (3, 2, 4))
        symbols = enumerate_reduced_symbol_vectors(qpsk, 2)
        d = batch_margins(X, H, qpsk)
        assert d.shape == (3, 2, 4)
        for i in range(3):
            assert d[i] == pytest.approx(qos_matrix(H[i], X[i], symbols, qpsk), abs=1e-12)


class TestUnsupervisedLoss:
    def test_two_level_margin_example(self):
        # BPSK, two users, identity channel: margins {0.4, 0.4, 0.6, 0.6},
        # so nu = 0.5, mean squared deviation 0.01, and the loss is
        # -0.5 + 0.01 / 0.2 = -0.45.
        bpsk = make_constellation(2)
        H = np.eye(2, dtype=complex)
        X = np.array([[0.4, 0.4], [0.6, -0.6]], dtype=complex)
        assert batch_margins(X[None], H[None], bpsk)[0] == pytest.approx(
            np.array([[0.4, 0.4], [0.6, 0.6]]), abs=1e-15
        )
        assert unsupervised_loss(X, H, bpsk, 0.2) == pytest.approx(-0.45, abs=1e-12)

    def test_zero_precoder_gives_zero_loss(self, qpsk, rng):
        H = complex_normal(rng, (2, 2, 2))
        X = np.zeros((2, 2, 4), dtype=complex)
        assert unsupervised_loss(X, H, qpsk, 0.2) == 0.0

    def test_lambda_linearity(self, qpsk, rng):
        # lambda * (L + mean nu) equals the mean margin variance for every
        # lambda, so it must agree across two different values.
        H = complex_normal(rng, (4, 2, 2))
        X = complex_normal(rng, (4, 2, 4))
        nu = batch_margins(X, H, qpsk).mean(axis=(1, 2)).mean()
        a = 0.2 * (unsupervised_loss(X, H, qpsk, 0.2) + nu)
        b = 0.7 * (unsupervised_loss(X, H, qpsk, 0.7) + nu)
        assert a == pytest.approx(b, rel=1e-10)

    def test_value_and_grad_value_matches_loss(self, qpsk, rng):
        H = complex_normal(rng, (3, 2, 2))
        X = complex_normal(rng, (3, 2, 4))
        loss, _ = unsupervised_value_and_grad(X, H, qpsk, 0.2)
        assert loss == pytest.approx(unsupervised_loss(X, H, qpsk, 0.2), rel=1e-12)

    def test_single_sample_equals_singleton_batch(self, qpsk, rng):
        H = complex_normal(rng, (2, 2))
        X = complex_normal(rng, (2, 4))
        assert unsupervised_loss(X, H, qpsk, 0.3) == pytest.approx(
            unsupervised_loss(X[None], H[None], qpsk, 0.3), rel=1e-15
        )

    def test_gradient_matches_finite_differences(self, qpsk):
        rng = np.random.default_rng(1234)
        H = complex_normal(rng, (2, 2, 2))
        x_re = rng.standard_normal((2, 2, 4))
        x_im = rng.standard_normal((2, 2, 4))
        # Guard: the |Im z| kink must stay far from every sample point so
        # the finite differences see a smooth function.
        phas = np.einsum("bkn,bnl->bkl", H, x_re + 1j * x_im)
        assert np.min(np.abs(phas.imag)) > 1e-3

        def f():
            return unsupervised_loss(x_re + 1j * x_im, H, qpsk, 0.2)

        _, G = unsupervised_value_and_grad(x_re + 1j * x_im, H, qpsk, 0.2)
        assert G.real == pytest.approx(fd_grad(f, x_re), abs=1e-7)
        assert G.imag == pytest.approx(fd_grad(f, x_im), abs=1e-7)

    def test_rejects_nonpositive_lambda(self, qpsk, rng):
        H = complex_normal(rng, (1, 2, 2))
        X = complex_normal(rng, (1, 2, 4))
        with pytest.raises(ValueError, match="lambda_reg"):
            unsupervised_value_and_grad(X, H, qpsk, 0.0)

    def test_rejects_inconsistent_batch(self, qpsk, rng):
        with pytest.raises(ValueError, match="batch"):
            unsupervised_loss(
                complex_normal(rng, (2, 2, 4)), complex_normal(rng, (3, 2, 2)), qpsk, 0.2
            )


class TestSupervisedLoss:
    def test_perfect_match_is_zero(self, rng):
        X = complex_normal(rng, (2, 2, 4))
        assert supervised_loss(X, X.copy()) == 0.0

    def test_zero_prediction_gives_mean_squared_modulus(self, rng):
        labels = complex_normal(rng, (3, 2, 4))
        X = np.zeros_like(labels)
        assert supervised_loss(X, labels) == pytest.approx(
            float(np.mean(np.abs(labels) ** 2)), rel=1e-12
        )

    def test_unit_scalar_error(self):
        X = np.ones((1, 1, 1), dtype=complex)
        labels = np.zeros((1, 1, 1), dtype=complex)
        assert supervised_loss(X, labels) == pytest.approx(1.0, abs=1e-15)

    def test_shape_mismatch_rejected(self, rng):
        with pytest.raises(ValueError, match="mismatch"):
            supervised_loss(complex_normal(rng, (2, 2, 4)), complex_normal(rng, (2, 2, 3)))

    def test_gradient_matches_finite_differences(self, rng):
        labels = complex_normal(rng, (2, 2, 3))
        x_re = rng.standard_normal((2, 2, 3))
        x_im = rng.standard_normal((2, 2, 3))

        def f():
            return supervised_loss(x_re + 1j * x_im, labels)

        loss, G = supervised_value_and_grad(x_re + 1j * x_im, labels)
        assert loss == pytest.approx(f(), rel=1e-12)
        assert G.real == pytest.approx(fd_grad(f, x_re), abs=1e-8)
        assert G.imag == pytest.approx(fd_grad(f, x_im), abs=1e-8)


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


class TestEffectiveLr:
    def test_staircase_schedule(self):
        cfg = TrainConfig()
        assert effective_lr(cfg, 0) == pytest.approx(1e-3)
        assert effective_lr(cfg, 19) == pytest.approx(1e-3)
        assert effective_lr(cfg, 20) == pytest.approx(1e-4)
        assert effective_lr(cfg, 39) == pytest.approx(1e-4)
        assert effective_lr(cfg, 40) == pytest.approx(1e-5)


class TestAdam:
    def test_first_step_moves_by_learning_rate(self):
        # Bias correction makes the very first update lr * g / (|g| + eps),
        # i.e. essentially -lr in the gradient's direction.
        cfg = TrainConfig()
        p = [np.array([1.0])]
        g = [np.array([0.5])]
        state = AdamState.for_params(p)
        adam_step(p, g, state, cfg, epoch=0)
        assert p[0][0] == pytest.approx(1.0 - 1e-3, abs=1e-9)
        assert state.step == 1

    def test_zero_gradient_is_a_no_op(self):
        cfg = TrainConfig()
        p = [np.array([2.0, -3.0])]
        state = AdamState.for_params(p)
        adam_step(p, [np.zeros(2)], state, cfg, epoch=0)
        assert np.array_equal(p[0], np.array([2.0, -3.0]))

    def test_matches_reference_implementation(self, rng):
        cfg = TrainConfig(learning_rate=0.01)
        shapes = [(3, 2), (4,)]
        p = [rng.standard_normal(s) for s in shapes]
        p_ref = [x.copy() for x in p]
        state = AdamState.for_params(p)
        m = [np.zeros(s) for s in shapes]
        v = [np.zeros(s) for s in shapes]
        for t in range(1, 6):
            grads = [rng.standard_normal(s) for s in shapes]
            adam_step(p, grads, state, cfg, epoch=0)
            for x, g, mi, vi in zip(p_ref, grads, m, v):
                mi[...] = cfg.adam_beta1 * mi + (1 - cfg.adam_beta1) * g
                vi[...] = cfg.adam_beta2 * vi + (1 - cfg.adam_beta2) * g * g
                m_hat = mi / (1 - cfg.adam_beta1**t)
                v_hat = vi / (1 - cfg.adam_beta2**t)
                x -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_epsilon)
        for x, x_ref in zip(p, p_ref):
            assert x == pytest.approx(x_ref, abs=1e-14)

    def test_decayed_epoch_shrinks_step(self):
        cfg = TrainConfig()
        p = [np.array([1.0])]
        state = AdamState.for_params(p)
        adam_step(p, [np.array([0.5])], state, cfg, epoch=20)
        assert p[0][0] == pytest.approx(1.0 - 1e-4, abs=1e-10)

    def test_state_length_mismatch_rejected(self):
        p = [np.zeros(2), np.zeros(3)]
        state = AdamState.for_params(p[:1])
        with pytest.raises(ValueError, match="tracks"):
            adam_step(p, [np.zeros(2), np.zeros(3)], state, TrainConfig(), epoch=0)


class TestTrainConfig:
    def test_defaults_validate(self):
        TrainConfig().validate()

    @pytest.mark.parametrize(
        "overrides,match",
        [
            (dict(learning_rate=0.0), "learning_rate"),
            (dict(lambda_reg=-0.1), "lambda_reg"),
            (dict(epochs=0), "epochs"),
            (dict(batch_size=0), "batch_size"),
            (dict(decay_every=0), "decay_every"),
            (dict(decay_factor=0.0), "decay_factor"),
            (dict(decay_factor=1.5), "decay_factor"),
            (dict(adam_beta1=1.0), "adam_beta1"),
            (dict(mode="reinforced"), "mode"),
        ],
    )
    def test_rejects_bad_values(self, overrides, match):
        with pytest.raises(ValueError, match=match):
            TrainConfig(**overrides).validate()


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


@pytest.fixture
def tiny_channels(rng):
    return complex_normal(rng, (32, 2, 2))


class TestTrain:
    def test_smoke(self, tiny_spec, tiny_channels):
        cfg = TrainConfig(epochs=2, batch_size=16, seed=5)
        res = train(tiny_channels, tiny_spec, cfg)
        assert res.status == "ok"
        assert res.epochs_run == 2
        assert len(res.loss_trace) == 2
        assert all(np.isfinite(v) for v in res.loss_trace)
        assert res.adam_state is not None and res.adam_state.step == 4

    def test_deterministic(self, tiny_spec, tiny_channels):
        cfg = TrainConfig(epochs=2, batch_size=16, seed=5)
        a = train(tiny_channels, tiny_spec, cfg)
        b = train(tiny_channels, tiny_spec, cfg)
        assert a.loss_trace == b.loss_trace
        for pa, pb in zip(a.model.parameters(), b.model.parameters()):
            assert np.array_equal(pa, pb)

    def test_unsupervised_loss_decreases(self, tiny_spec, tiny_channels):
        cfg = TrainConfig(epochs=6, batch_size=16, seed=5)
        res = train(tiny_channels, tiny_spec, cfg)
        assert res.loss_trace[-1] < res.loss_trace[0]

    def test_divergence_rolls_back(self, tiny_spec, tiny_channels):
        bad = tiny_channels.copy()
        bad[3, 0, 0] = np.nan
        cfg = TrainConfig(epochs=2, batch_size=16, seed=5)
        res = train(bad, tiny_spec, cfg)
        assert res.status == "diverged"
        assert res.epochs_run == 0
        assert res.loss_trace == []
        fresh = EPNN(tiny_spec, init_seed=cfg.seed)
        for p, q in zip(res.model.parameters(), fresh.parameters()):
            assert np.array_equal(p, q)

    def test_resume_is_bit_exact(self, tiny_spec, tiny_channels):
        cfg4 = TrainConfig(epochs=4, batch_size=16, seed=5)
        straight = train(tiny_channels, tiny_spec, cfg4)

        cfg2 = TrainConfig(epochs=2, batch_size=16, seed=5)
        half = train(tiny_channels, tiny_spec, cfg2)
        resumed = train(
            tiny_channels,
            tiny_spec,
            cfg4,
            model=half.model,
            adam_state=half.adam_state,
            start_epoch=2,
            loss_trace=half.loss_trace,
        )
        assert resumed.loss_trace == straight.loss_trace
        for p, q in zip(resumed.model.parameters(), straight.model.parameters()):
            assert np.array_equal(p, q)
        for s, t in zip(resumed.model.stats(), straight.model.stats()):
            assert np.array_equal(s, t)

    def test_supervised_learns_realizable_target(self, tiny_spec, tiny_channels):
        teacher = EPNN(tiny_spec, init_seed=99)
        labels = teacher.forward(tiny_channels, training=False)
        cfg = TrainConfig(epochs=5, batch_size=16, seed=5, mode="supervised")
        res = train(tiny_channels, tiny_spec, cfg, labels=labels)
        assert res.status == "ok"
        assert res.loss_trace[-1] < res.loss_trace[0]

    def test_supervised_requires_labels(self, tiny_spec, tiny_channels):
        cfg = TrainConfig(epochs=1, batch_size=16, seed=5, mode="supervised")
        with pytest.raises(ValueError, match="labels"):
            train(tiny_channels, tiny_spec, cfg)

    def test_supervised_label_shape_checked(self, tiny_spec, tiny_channels, rng):
        cfg = TrainConfig(epochs=1, batch_size=16, seed=5, mode="supervised")
        with pytest.raises(ValueError, match="labels shape"):
            train(tiny_channels, tiny_spec, cfg, labels=complex_normal(rng, (32, 2, 3)))

    def test_empty_dataset_rejected(self, tiny_spec):
        cfg = TrainConfig(epochs=1, batch_size=4, seed=5)
        with pytest.raises(ValueError, match="empty"):
            train(np.zeros((0, 2, 2), dtype=complex), tiny_spec, cfg)

    def test_shape_mismatch_rejected(self, tiny_spec, rng):
        cfg = TrainConfig(epochs=1, batch_size=4, seed=5)
        with pytest.raises(ValueError, match="does not match spec"):
            train(complex_normal(rng, (8, 3, 2)), tiny_spec, cfg)

    def test_epoch_callback_runs_per_epoch(self, tiny_spec, tiny_channels):
        seen = []
        cfg = TrainConfig(epochs=3, batch_size=16, seed=5)
        train(
            tiny_channels,
            tiny_spec,
            cfg,
            epoch_callback=lambda epoch, model, state, loss: seen.append(epoch),
        )
        assert seen == [0, 1, 2]


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


@pytest.fixture
def trained_model(tiny_spec, tiny_channels):
    cfg = TrainConfig(epochs=1, batch_size=16, seed=5)
    return train(tiny_channels, tiny_spec, cfg).model


class TestCheckpointRoundtrip:
    def test_model_roundtrip(self, trained_model, tiny_channels, tmp_path):
        path = tmp_path / "model.slpw"
        save_checkpoint(path, trained_model)
        loaded = load_checkpoint(path)
        assert loaded.spec == trained_model.spec
        for p, q in zip(loaded.parameters(), trained_model.parameters()):
            assert np.array_equal(p, q)
        for s, t in zip(loaded.stats(), trained_model.stats()):
            assert np.array_equal(s, t)
        assert np.array_equal(
            infer(loaded, tiny_channels[:4]), infer(trained_model, tiny_channels[:4])
        )

    def test_save_is_deterministic(self, trained_model, tmp_path):
        a, b = tmp_path / "a.slpw", tmp_path / "b.slpw"
        save_checkpoint(a, trained_model)
        save_checkpoint(b, trained_model)
        assert a.read_bytes() == b.read_bytes()

    def test_train_state_roundtrip(self, tiny_spec, tiny_channels, tmp_path):
        cfg = TrainConfig(epochs=2, batch_size=16, seed=5)
        res = train(tiny_channels, tiny_spec, cfg)
        path = tmp_path / "state.slpa"
        save_train_state(path, res.adam_state, res.epochs_run, res.loss_trace)
        state, epoch, trace = load_train_state(path)
        assert state.step == res.adam_state.step
        assert epoch == 2
        assert trace == res.loss_trace
        for m, m0 in zip(state.m, res.adam_state.m):
            assert np.array_equal(m, m0)
        for v, v0 in zip(state.v, res.adam_state.v):
            assert np.array_equal(v, v0)


class TestCheckpointCorruption:
    @pytest.fixture
    def blob(self, trained_model, tmp_path):
        path = tmp_path / "model.slpw"
        save_checkpoint(path, trained_model)
        return path, path.read_bytes()

    def test_bad_magic_at_offset_zero(self, blob, tmp_path):
        path, data = blob
        path.write_bytes(b"ZZZZ" + data[4:])
        with pytest.raises(CheckpointFormatError, match="magic") as err:
            load_checkpoint(path)
        assert err.value.offset == 0

    def test_bad_version_at_offset_four(self, blob):
        path, data = blob
        path.write_bytes(data[:4] + struct.pack("<I", 9) + data[8:])
        with pytest.raises(CheckpointFormatError, match="version 9") as err:
            load_checkpoint(path)
        assert err.value.offset == 4

    def test_truncated_file(self, blob):
        path, data = blob
        path.write_bytes(data[:-16])
        with pytest.raises(CheckpointFormatError, match="truncated"):
            load_checkpoint(path)

    def test_trailing_bytes(self, blob):
        path, data = blob
        path.write_bytes(data + b"\x00\x00")
        with pytest.raises(CheckpointFormatError, match="trailing"):
            load_checkpoint(path)

    def test_wrong_parameter_count(self, blob):
        path, data = blob
        spec_len = struct.unpack("<I", data[8:12])[0]
        pos = 12 + spec_len
        path.write_bytes(data[:pos] + struct.pack("<I", 999) + data[pos + 4 :])
        with pytest.raises(CheckpointFormatError, match="999"):
            load_checkpoint(path)

    def test_corrupt_spec_payload(self, blob):
        path, data = blob
        spec_len = struct.unpack("<I", data[8:12])[0]
        garbage = b"{" * spec_len
        path.write_bytes(data[:12] + garbage + data[12 + spec_len :])
        with pytest.raises(CheckpointFormatError, match="spec"):
            load_checkpoint(path)

    def test_state_bad_magic(self, tmp_path):
        path = tmp_path / "state.slpa"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(CheckpointFormatError, match="SLPA") as err:
            load_train_state(path)
        assert err.value.offset == 0
