import numpy as np
import pytest

from helpers import central_difference, max_relative_error

from noisy_label_lab import autodiff as ad
from noisy_label_lab.autodiff import Tensor
from noisy_label_lab.errors import ConfigurationError, UsageError


def scalar_loss(node):
    return node.sum() if node.data.size != 1 else node


class TestAffine:
    def test_identity_weight_zero_bias(self):
        x = Tensor([[1.0, 2.0], [3.0, 4.0]])
        w = Tensor(np.eye(2))
        b = Tensor(np.zeros(2))
        out = ad.affine(x, w, b)
        np.testing.assert_array_equal(out.data, x.data)

    def test_matches_naive_triple_loop(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(3, 4))
        w = rng.normal(size=(4, 5))
        b = rng.normal(size=5)
        out = ad.affine(Tensor(x), Tensor(w), Tensor(b))
        expect = np.zeros((3, 5))
        for i in range(3):
            for j in range(5):
                acc = b[j]
                for k in range(4):
                    acc += x[i, k] * w[k, j]
                expect[i, j] = acc
        np.testing.assert_allclose(out.data, expect, rtol=0, atol=1e-12)

    def test_shape_mismatch_names_dimensions(self):
        x = Tensor(np.zeros((2, 3)))
        w = Tensor(np.zeros((4, 5)))
        b = Tensor(np.zeros(5))
        with pytest.raises(ConfigurationError, match="3 columns but weight has 4 rows"):
            ad.affine(x, w, b)

    def test_bias_length_mismatch(self):
        with pytest.raises(ConfigurationError, match="bias"):
            ad.affine(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 4))), Tensor(np.zeros(3)))

    def test_gradients_against_finite_differences(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=(3, 4))
        w = rng.normal(size=(4, 2))
        b = rng.normal(size=2)
        mix = rng.normal(size=(3, 2))

        def forward(arrays):
            xa, wa, ba = arrays
            out = ad.affine(Tensor(xa), Tensor(wa), Tensor(ba))
            return (out * Tensor(mix)).sum().item()

        xt, wt, bt = Tensor(x), Tensor(w), Tensor(b)
        loss = (ad.affine(xt, wt, bt) * Tensor(mix)).sum()
        ad.backward(loss)
        numeric = central_difference(forward, [x, w, b])
        assert max_relative_error([xt.grad, wt.grad, bt.grad], numeric) < 1e-6


class TestSigmoid:
    def test_zero_maps_to_half(self):
        assert ad.sigmoid(Tensor(0.0)).item() == 0.5

    def test_saturation_stays_inside_open_interval(self):
        hi = ad.sigmoid(Tensor(40.0)).item()
        assert hi < 1.0
        assert hi > 1.0 - 1e-15
        lo = ad.sigmoid(Tensor(-40.0)).item()
        assert lo > 0.0
        assert lo < 1e-15

    def test_extreme_inputs_stay_finite_and_inside(self):
        out = ad.sigmoid(Tensor([-1e4, -710.0, 710.0, 1e4])).data
        assert np.all(np.isfinite(out))
        assert np.all(out > 0.0)
        assert np.all(out < 1.0)

    def test_derivative_at_zero(self):
        x = Tensor(np.zeros((1, 1)))
        out = ad.sigmoid(x).sum()
        ad.backward(out)
        assert abs(x.grad[0, 0] - 0.25) < 1e-12

        def forward(arrays):
            return ad.sigmoid(Tensor(arrays[0])).sum().item()

        numeric = central_difference(forward, [np.zeros((1, 1))])
        assert abs(numeric[0][0, 0] - 0.25) < 1e-8


class TestClip01:
    def test_values(self):
        out = ad.clip01(Tensor([-0.5, 0.25, 1.5]))
        np.testing.assert_array_equal(out.data, [0.0, 0.25, 1.0])

    def test_gradient_mask(self):
        x = Tensor([-0.5, 0.25, 1.5])
        loss = ad.clip01(x).sum()
        ad.backward(loss)
        np.testing.assert_array_equal(x.grad, [0.0, 1.0, 0.0])

    def test_boundary_gradient_passes(self):
        # Binary labels plus a zero residual land exactly on 0 and 1;
        # gradient must flow there or the residual branch never moves.
        x = Tensor([0.0, 1.0])
        ad.backward(ad.clip01(x).sum())
        np.testing.assert_array_equal(x.grad, [1.0, 1.0])

    def test_idempotent(self):
        rng = np.random.default_rng(3)
        x = Tensor(rng.normal(scale=2.0, size=50))
        once = ad.clip01(x)
        twice = ad.clip01(once)
        np.testing.assert_array_equal(once.data, twice.data)


class TestStopGradient:
    def test_forward_identity(self):
        x = Tensor([1.0, -2.0])
        np.testing.assert_array_equal(ad.stop_gradient(x).data, x.data)

    def test_blocks_flow_exactly(self):
        x = Tensor([1.0, 2.0])
        y = Tensor([3.0, 4.0])
        loss = (ad.stop_gradient(x) * y).sum()
        grads = ad.backward(loss)
        assert x not in grads
        assert x.grad is None or not np.any(x.grad)
        np.testing.assert_array_equal(grads[y], x.data)

    def test_factor_of_two_example(self):
        # loss = x * stop(x): gradient is stop(x), not 2x
        x = Tensor([3.0])
        loss = (x * ad.stop_gradient(x)).sum()
        grads = ad.backward(loss)
        np.testing.assert_array_equal(grads[x], [3.0])

    def test_nested_stop(self):
        x = Tensor([5.0])
        loss = ad.stop_gradient(ad.stop_gradient(x)).sum()
        grads = ad.backward(loss)
        assert x not in grads


class TestElementwiseAndReductions:
    def test_sum_gradient_is_ones(self):
        x = Tensor(np.arange(6.0).reshape(2, 3))
        grads = ad.backward(x.sum())
        np.testing.assert_array_equal(grads[x], np.ones((2, 3)))

    def test_square_gradient(self):
        x = Tensor([1.0, 2.0, 3.0])
        ad.backward((x * x).sum())
        np.testing.assert_array_equal(x.grad, [2.0, 4.0, 6.0])

    def test_shared_subexpression_accumulates(self):
        x = Tensor([2.0])
        y = x * x
        loss = (y + y).sum()
        ad.backward(loss)
        np.testing.assert_array_equal(x.grad, [8.0])

    def test_scalar_constant_ops(self):
        x = Tensor([1.0, 2.0])
        loss = ((1.0 - x) * 3.0 + 2.0).sum()
        ad.backward(loss)
        np.testing.assert_array_equal(x.grad, [-3.0, -3.0])
        assert loss.item() == (0.0 * 3 + 2) + (-1.0 * 3 + 2)

    def test_abs_gradient_sign_convention(self):
        x = Tensor([-2.0, 0.0, 3.0])
        ad.backward(abs(x).sum())
        np.testing.assert_array_equal(x.grad, [-1.0, 0.0, 1.0])

    def test_add_shape_mismatch(self):
        with pytest.raises(ConfigurationError, match="shapes"):
            Tensor([1.0, 2.0]) + Tensor([[1.0], [2.0]])

    def test_non_numeric_operand_rejected(self):
        with pytest.raises(UsageError, match="real scalar"):
            Tensor([1.0]) + "nope"


class TestLog:
    def test_floor_clamp_value_and_gradient(self):
        x = Tensor([1e-20, 1e-12, 1.0])
        out = ad.log(x)
        np.testing.assert_allclose(out.data[:2], np.log(1e-12), rtol=0, atol=0)
        ad.backward(out.sum())
        assert x.grad[0] == 0.0
        assert x.grad[1] == 0.0
        assert x.grad[2] == 1.0

    def test_matches_numpy_above_floor(self):
        vals = np.array([0.1, 0.5, 2.0])
        out = ad.log(Tensor(vals))
        np.testing.assert_array_equal(out.data, np.log(vals))


class TestConcat:
    def test_forward_and_split_gradient(self):
        a = Tensor(np.ones((2, 2)))
        b = Tensor(np.full((2, 3), 2.0))
        out = ad.concat([a, b], axis=1)
        assert out.shape == (2, 5)
        mix = Tensor(np.arange(10.0).reshape(2, 5))
        ad.backward((out * mix).sum())
        np.testing.assert_array_equal(a.grad, mix.data[:, :2])
        np.testing.assert_array_equal(b.grad, mix.data[:, 2:])

    def test_rank_mismatch(self):
        with pytest.raises(ConfigurationError, match="rank"):
            ad.concat([Tensor(np.zeros(2)), Tensor(np.zeros((2, 2)))])

    def test_off_axis_size_mismatch(self):
        with pytest.raises(ConfigurationError, match="axis 0"):
            ad.concat([Tensor(np.zeros((2, 2))), Tensor(np.zeros((3, 2)))], axis=1)


class TestBackward:
    def test_non_scalar_root_rejected(self):
        x = Tensor([[1.0, 2.0]])
        with pytest.raises(UsageError, match="scalar"):
            ad.backward(x)

    def test_repeated_backward_does_not_accumulate(self):
        x = Tensor([1.0, 2.0])
        loss = (x * x).sum()
        ad.backward(loss)
        first = x.grad.copy()
        ad.backward(loss)
        np.testing.assert_array_equal(x.grad, first)

    def test_bitwise_deterministic(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(4, 3))
        w = rng.normal(size=(3, 3))
        b = rng.normal(size=3)

        def run():
            xt, wt, bt = Tensor(x), Tensor(w), Tensor(b)
            out = ad.tanh(ad.affine(xt, wt, bt))
            out = ad.sigmoid(ad.affine(out, Tensor(w), Tensor(b)))
            loss = abs(1.0 - out).sum()
            ad.backward(loss)
            return loss.item(), xt.grad.copy(), wt.grad.copy(), bt.grad.copy()

        la, xa, wa, ba = run()
        lb, xb, wb, bb = run()
        assert la == lb
        assert np.array_equal(xa, xb)
        assert np.array_equal(wa, wb)
        assert np.array_equal(ba, bb)

    def test_two_layer_network_against_finite_differences(self):
        rng = np.random.default_rng(13)
        x = rng.normal(size=(3, 4))
        w1 = rng.normal(size=(4, 5))
        b1 = rng.normal(size=5)
        w2 = rng.normal(size=(5, 2))
        b2 = rng.normal(size=2)
        target = rng.uniform(0.2, 0.8, size=(3, 2))

        def forward(arrays):
            xa, w1a, b1a, w2a, b2a = (Tensor(a) for a in arrays)
            hidden = ad.tanh(ad.affine(xa, w1a, b1a))
            p = ad.sigmoid(ad.affine(hidden, w2a, b2a))
            t = Tensor(target)
            loss = -(t * ad.log(p) + (1.0 - t) * ad.log(1.0 - p)).sum()
            return loss.item()

        params = [x, w1, b1, w2, b2]
        tensors = [Tensor(a) for a in params]
        hidden = ad.tanh(ad.affine(tensors[0], tensors[1], tensors[2]))
        p = ad.sigmoid(ad.affine(hidden, tensors[3], tensors[4]))
        t = Tensor(target)
        loss = -(t * ad.log(p) + (1.0 - t) * ad.log(1.0 - p)).sum()
        ad.backward(loss)
        numeric = central_difference(forward, params)
        analytic = [tt.grad for tt in tensors]
        assert max_relative_error(analytic, numeric) < 1e-4

    def test_forward_values_finite_on_finite_inputs(self):
        rng = np.random.default_rng(17)
        x = Tensor(rng.normal(scale=50.0, size=(5, 4)))
        w = Tensor(rng.normal(scale=50.0, size=(4, 4)))
        b = Tensor(rng.normal(scale=50.0, size=4))
        out = ad.sigmoid(ad.affine(x, w, b))
        chained = ad.log(ad.clip01(ad.tanh(out)))
        assert np.all(np.isfinite(chained.data))


class TestImmutability:
    def test_leaf_copies_input(self):
        src = np.ones(3)
        t = Tensor(src)
        src[0] = 99.0
        assert t.data[0] == 1.0

    def test_data_is_read_only(self):
        t = Tensor([1.0, 2.0])
        with pytest.raises(ValueError):
            t.data[0] = 5.0
