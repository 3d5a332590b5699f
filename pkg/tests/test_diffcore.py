import numpy as np
import pytest

from bimoe import _kernels
from bimoe.diffcore import (
    BatchNormState,
    Parameter,
    Tensor,
    batch_norm,
    check_gradient,
    concat,
    conv1d,
    matmul,
    primitive_forward,
    softmax,
)
from bimoe._kernels import _convnp


def test_relu_definition():
    out = primitive_forward("relu", Tensor([-1.0, 0.0, 2.0]))
    np.testing.assert_array_equal(out.data, [0.0, 0.0, 2.0])


def test_matmul_identity():
    x = np.random.default_rng(0).normal(size=(3, 5))
    out = primitive_forward("matmul", Tensor(np.eye(3)), Tensor(x))
    np.testing.assert_array_equal(out.data, x)


def test_concat_definition():
    out = primitive_forward("concat", Tensor([1.0, 2.0]), Tensor([3.0]), axis=0)
    np.testing.assert_array_equal(out.data, [1.0, 2.0, 3.0])


def test_matmul_shape_mismatch_names_both_shapes():
    with pytest.raises(ValueError, match=r"\(2, 3\).*\(4, 2\)"):
        matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))


def test_unknown_primitive_rejected():
    with pytest.raises(ValueError, match="unknown primitive"):
        primitive_forward("sigmoid", Tensor([0.0]))


class TestConv1d:
    def test_delta_kernel_is_identity(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(2, 32))
        k = np.zeros((2, 2, 7))
        k[0, 0, 3] = 1.0
        k[1, 1, 3] = 1.0
        out = conv1d(Tensor(x), Tensor(k), Tensor(np.zeros(2)))
        np.testing.assert_allclose(out.data, x, atol=1e-14)

    def test_zero_kernel_gives_bias(self):
        x = np.random.default_rng(2).normal(size=(3, 16))
        out = conv1d(Tensor(x), Tensor(np.zeros((2, 3, 5))), Tensor([1.5, -0.5]))
        np.testing.assert_allclose(out.data[0], 1.5)
        np.testing.assert_allclose(out.data[1], -0.5)

    def test_matches_nested_loop_oracle(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(2, 32))
        k = rng.normal(size=(3, 2, 15))
        b = rng.normal(size=3)
        out = conv1d(Tensor(x), Tensor(k), Tensor(b)).data
        # independent brute-force convolution
        pad = 7
        xp = np.pad(x, ((0, 0), (pad, pad)))
        expect = np.zeros((3, 32))
        for c in range(3):
            for t in range(32):
                acc = b[c]
                for i in range(2):
                    for j in range(15):
                        acc += k[c, i, j] * xp[i, t + j]
                expect[c, t] = acc
        np.testing.assert_allclose(out, expect, atol=1e-12)

    def test_even_kernel_rejected(self):
        with pytest.raises(ValueError, match="odd"):
            conv1d(Tensor(np.zeros((1, 8))), Tensor(np.zeros((1, 1, 4))), Tensor(np.zeros(1)))

    def test_cin_mismatch_rejected(self):
        with pytest.raises(ValueError, match="C_in"):
            conv1d(Tensor(np.zeros((2, 8))), Tensor(np.zeros((1, 3, 5))), Tensor(np.zeros(1)))

    def test_linearity_in_input(self):
        rng = np.random.default_rng(4)
        x, y = rng.normal(size=(2, 3, 20)), rng.normal(size=(2, 3, 20))
        k = Tensor(rng.normal(size=(4, 3, 7)))
        zb = Tensor(np.zeros(4))
        lhs = conv1d(Tensor(2.0 * x - 0.5 * y), k, zb).data
        rhs = 2.0 * conv1d(Tensor(x), k, zb).data - 0.5 * conv1d(Tensor(y), k, zb).data
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_backends_agree(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(2, 3, 16))
        k = rng.normal(size=(4, 3, 7))
        b = rng.normal(size=4)
        f_fast = _kernels.conv1d_forward(x, k, b)
        f_np = _convnp.conv1d_forward(x, k, b)
        np.testing.assert_allclose(f_fast, f_np, atol=1e-12)
        g = rng.normal(size=(2, 4, 16))
        np.testing.assert_allclose(_kernels.conv1d_backward_input(g, k),
                                   _convnp.conv1d_backward_input(g, k), atol=1e-12)
        np.testing.assert_allclose(_kernels.conv1d_backward_kernels(g, x, 7),
                                   _convnp.conv1d_backward_kernels(g, x, 7), atol=1e-12)


class TestBatchNorm:
    def test_already_normalized_passthrough(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(64, 4))
        x = (x - x.mean(axis=0)) / x.std(axis=0)
        out = batch_norm(Tensor(x), Parameter(np.ones(4)), Parameter(np.zeros(4)),
                         True, BatchNormState(4))
        np.testing.assert_allclose(out.data, x, atol=1e-4)

    def test_constant_column_maps_to_beta(self):
        x = np.ones((8, 1)) * 3.0
        out = batch_norm(Tensor(x), Parameter(np.ones(1)), Parameter(np.full(1, 5.0)),
                         True, BatchNormState(1))
        np.testing.assert_allclose(out.data, 5.0, atol=1e-6)

    def test_output_statistics_oracle(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(8, 4))
        out = batch_norm(Tensor(x), Parameter(np.ones(4)), Parameter(np.zeros(4)),
                         True, BatchNormState(4)).data
        assert np.all(np.abs(out.mean(axis=0)) < 1e-9)
        # biased variance convention
        np.testing.assert_allclose(out.var(axis=0), 1.0, atol=1e-4)

    def test_batch_of_one_rejected_in_train(self):
        with pytest.raises(ValueError, match="batch size"):
            batch_norm(Tensor(np.zeros((1, 4))), Parameter(np.ones(4)),
                       Parameter(np.zeros(4)), True, BatchNormState(4))

    def test_eval_uses_running_stats(self):
        state = BatchNormState(2)
        state.running_mean[:] = [1.0, -1.0]
        state.running_var[:] = [4.0, 0.25]
        x = np.array([[3.0, 0.0]])
        out = batch_norm(Tensor(x), Parameter(np.ones(2)), Parameter(np.zeros(2)),
                         False, state)
        np.testing.assert_allclose(out.data, [[1.0, 2.0]], atol=1e-4)


class TestSoftmax:
    def test_uniform_on_zeros(self):
        out = softmax(Tensor([0.0, 0.0, 0.0]))
        np.testing.assert_allclose(out.data, 1.0 / 3.0, atol=1e-15)

    def test_no_overflow_on_large_inputs(self):
        out = softmax(Tensor([1000.0, 0.0]))
        assert np.isfinite(out.data).all()
        np.testing.assert_allclose(out.data[0], 1.0, atol=1e-12)

    def test_closed_form_log_inputs(self):
        out = softmax(Tensor(np.log([1.0, 2.0, 3.0])))
        np.testing.assert_allclose(out.data, [1 / 6, 2 / 6, 3 / 6], atol=1e-14)

    def test_sums_to_one_axis(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(5, 7)) * 10
        out = softmax(Tensor(x), axis=1)
        np.testing.assert_allclose(out.data.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(out.data >= 0)


class TestCheckGradient:
    def test_relu_sum_linear_region(self):
        x = Tensor(np.array([0.5, 1.0, 2.0]))
        err = check_gradient(lambda t: t.relu().sum(), x)
        assert err < 1e-7

    def test_scalar_required(self):
        with pytest.raises(ValueError, match="scalar"):
            check_gradient(lambda t: t * 2.0, Tensor(np.ones(3)))

    @pytest.mark.parametrize("op", ["matmul", "conv", "softmax", "bn", "mlp"])
    def test_per_op_gradients(self, op):
        rng = np.random.default_rng(hash(op) % 2**31)
        if op == "matmul":
            w = rng.uniform(-1, 1, size=(4, 3))
            f = lambda t: (matmul(t, Tensor(w)) ** 2.0).sum()
            x = Tensor(rng.uniform(-1, 1, size=(5, 4)))
        elif op == "conv":
            k = Tensor(rng.uniform(-1, 1, size=(2, 3, 5)), requires_grad=True)
            b = Tensor(rng.uniform(-1, 1, size=2), requires_grad=True)
            f = lambda t: (conv1d(t, k, b) ** 2.0).sum()
            x = Tensor(rng.uniform(-1, 1, size=(2, 3, 12)))
        elif op == "softmax":
            f = lambda t: (softmax(t, axis=1) ** 2.0).sum()
            x = Tensor(rng.uniform(-1, 1, size=(4, 6)))
        elif op == "bn":
            g = Parameter(rng.uniform(0.5, 1.5, size=3))
            bta = Parameter(rng.uniform(-1, 1, size=3))
            f = lambda t: (batch_norm(t, g, bta, True, BatchNormState(3)) ** 3.0).sum()
            x = Tensor(rng.uniform(-1, 1, size=(6, 3)))
        else:
            w1 = Tensor(rng.uniform(-1, 1, size=(4, 8)))
            w2 = Tensor(rng.uniform(-1, 1, size=(8, 1)))
            f = lambda t: matmul(matmul(t, w1).relu() + 0.1, w2).sum()
            x = Tensor(rng.uniform(-1, 1, size=(3, 4)))
        assert check_gradient(f, x) < 1e-4

    def test_param_gradient_through_conv(self):
        rng = np.random.default_rng(11)
        x = Tensor(rng.uniform(-1, 1, size=(2, 2, 10)))
        b = Tensor(rng.uniform(-1, 1, size=3), requires_grad=True)
        k = Tensor(rng.uniform(-1, 1, size=(3, 2, 5)))
        err = check_gradient(lambda t: (conv1d(x, t, b) ** 2.0).sum(), k)
        assert err < 1e-6


def test_forward_bit_determinism():
    rng = np.random.default_rng(12)
    x = rng.normal(size=(3, 4, 16))
    k = rng.normal(size=(2, 4, 7))
    b = rng.normal(size=2)
    a = conv1d(Tensor(x), Tensor(k), Tensor(b)).data
    bb = conv1d(Tensor(x), Tensor(k), Tensor(b)).data
    assert np.array_equal(a, bb)


def test_parameter_grad_accumulates_and_zeroes():
    p = Parameter(np.ones(3), name="w")
    (Tensor(np.array([1.0, 2.0, 3.0])) * p).sum().backward()
    np.testing.assert_array_equal(p.grad, [1.0, 2.0, 3.0])
    p.zero_grad()
    np.testing.assert_array_equal(p.grad, 0.0)


def test_concat_backward_splits_gradient():
    a = Tensor(np.ones(2), requires_grad=True)
    b = Tensor(np.ones(3), requires_grad=True)
    out = concat([a, b], axis=0)
    (out * Tensor(np.arange(5.0))).sum().backward()
    np.testing.assert_array_equal(a.grad, [0.0, 1.0])
    np.testing.assert_array_equal(b.grad, [2.0, 3.0, 4.0])
