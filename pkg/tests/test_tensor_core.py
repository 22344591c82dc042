"""
张量与自动求导测试：前向数值、梯度检查、裁剪与精度开关
"""

import math

import numpy as np
import pytest

import tensor_core as tc
from errors import ConfigError, DegenerateSliceError, NumericError, ShapeError
from tensor_core import Parameter, Tensor


def check_gradient(build_loss, params, tol=1e-4):
    """对每个参数比较反向传播梯度与中心差分数值梯度"""
    loss = build_loss()
    tc.backward(loss, params)
    for p in params:
        analytic = p.grad.copy()
        numeric = tc.numerical_gradient(lambda: float(build_loss().data), p.data, step=1e-5)
        assert tc.relative_error(analytic, numeric) <= tol, p.name
        p.zero_grad()


class TestForward:
    """逐个原语的前向结果"""

    def test_matmul_identity(self):
        b = np.array([[5.0, 6.0], [7.0, 8.0]])
        out = tc.matmul(Tensor(np.eye(2)), Tensor(b))
        np.testing.assert_allclose(out.data, b)

    def test_matmul_values(self):
        out = Tensor([[1.0, 2.0], [3.0, 4.0]]) @ Tensor([[5.0, 6.0], [7.0, 8.0]])
        np.testing.assert_allclose(out.data, [[19.0, 22.0], [43.0, 50.0]])

    def test_matmul_shape_error_names_both_shapes(self):
        with pytest.raises(ShapeError) as info:
            tc.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
        assert "(2, 3)" in str(info.value)

    def test_gelu_values(self, float64):
        out = tc.gelu(Tensor([0.0, 10.0, 1.0])).data
        assert out[0] == 0.0
        assert abs(out[1] - 10.0) < 1e-6
        assert abs(out[2] - 0.841345) < 1e-6

    def test_softmax_values(self, float64):
        np.testing.assert_allclose(tc.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])
        out = tc.softmax(Tensor([1.0, 2.0, 3.0])).data
        np.testing.assert_allclose(out, [0.090031, 0.244728, 0.665241], atol=1e-6)
        shifted = tc.softmax(Tensor([101.0, 102.0, 103.0])).data
        np.testing.assert_allclose(shifted, out, atol=1e-12)

    def test_softmax_rows_sum_to_one(self, rng):
        out = tc.softmax(Tensor(rng.normal(size=(4, 7)) * 20), axis=-1).data
        np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-6)
        assert np.all((out >= 0) & (out <= 1))

    def test_softmax_mask_gives_exact_zero(self):
        mask = np.array([[True, False, True]])
        out = tc.softmax(Tensor([[1.0, 50.0, 1.0]]), mask=mask).data
        assert out[0, 1] == 0.0
        np.testing.assert_allclose(out[0, [0, 2]], [0.5, 0.5])

    def test_softmax_fully_masked_slice(self):
        with pytest.raises(DegenerateSliceError):
            tc.softmax(Tensor([[1.0, 2.0]]), mask=np.array([[False, False]]))

    def test_softmax_neg_inf_inputs(self):
        out = tc.softmax(Tensor([[-math.inf, 0.0, 0.0]])).data
        np.testing.assert_allclose(out, [[0.0, 0.5, 0.5]])
        with pytest.raises(DegenerateSliceError):
            tc.softmax(Tensor([[-math.inf, -math.inf], [0.0, 1.0]]))
        with pytest.raises(DegenerateSliceError):
            tc.softmax(Tensor([[-math.inf, 1.0]]), mask=np.array([[True, False]]))

    def test_layer_norm_values(self, float64):
        gain, bias = Tensor(np.ones(3)), Tensor(np.zeros(3))
        np.testing.assert_allclose(tc.layer_norm(Tensor([[5.0, 5.0, 5.0]]), gain, bias).data, 0.0)
        out = tc.layer_norm(Tensor([[1.0, 2.0, 3.0]]), gain, bias, eps=0.0).data
        np.testing.assert_allclose(out, [[-1.224745, 0.0, 1.224745]], atol=1e-6)

    def test_layer_norm_statistics(self, rng, float64):
        x = Tensor(rng.normal(3.0, 5.0, size=(6, 32)))
        out = tc.layer_norm(x, Tensor(np.ones(32)), Tensor(np.zeros(32))).data
        assert np.all(np.abs(out.mean(axis=-1)) <= 1e-5)
        np.testing.assert_allclose(out.var(axis=-1), 1.0, atol=1e-3)

    def test_dropout(self, rng):
        x = Tensor(np.ones(100_000))
        assert tc.dropout(x, 0.0, rng, training=True) is x
        assert tc.dropout(x, 0.1, rng, training=False) is x
        out = tc.dropout(x, 0.1, rng, training=True).data
        assert 0.98 <= out.mean() <= 1.02
        with pytest.raises(ConfigError):
            tc.dropout(x, 1.0, rng, training=True)


class TestBackward:
    """反向传播与梯度检查"""

    def test_product_rule(self):
        x, y = Parameter(np.array(3.0), "x"), Parameter(np.array(5.0), "y")
        tc.backward(x * y, [x, y])
        assert float(x.grad) == 5.0
        assert float(y.grad) == 3.0

    def test_unused_parameter_gets_zero_grad(self):
        x, unused = Parameter(np.array([2.0]), "x"), Parameter(np.ones((2, 2)), "unused")
        tc.backward((x * x).sum(), [x, unused])
        np.testing.assert_array_equal(unused.grad, np.zeros((2, 2)))

    def test_non_scalar_loss(self):
        x = Parameter(np.ones(3), "x")
        with pytest.raises(ShapeError):
            tc.backward(x * 2.0, [x])

    def test_non_finite_loss(self):
        x = Parameter(np.array([np.inf]), "x")
        with pytest.raises(NumericError):
            tc.backward((x * 1.0).sum(), [x])

    def test_softmax_cross_entropy_gradient_is_y_minus_z(self, rng, float64):
        logits = Parameter(rng.normal(size=(3, 5)), "logits")
        targets = np.array([0, 4, 2])
        tc.backward(tc.softmax_cross_entropy(logits, targets), [logits])
        z = np.eye(5)[targets]
        y = np.exp(logits.data) / np.exp(logits.data).sum(axis=-1, keepdims=True)
        np.testing.assert_allclose(logits.grad, (y - z) / 3, atol=1e-12)

    @pytest.mark.parametrize("op", ["tanh", "sigmoid", "gelu", "exp", "log"])
    def test_elementwise_gradients(self, rng, float64, op):
        x = Parameter(rng.uniform(0.5, 2.0, size=(3, 4)), "x")
        fn = getattr(tc, op)
        check_gradient(lambda: (fn(x) * fn(x)).sum(), [x])

    def test_matmul_and_broadcast_gradients(self, rng, float64):
        a = Parameter(rng.normal(size=(2, 3, 4)), "a")
        b = Parameter(rng.normal(size=(4, 5)), "b")
        bias = Parameter(rng.normal(size=5), "bias")
        check_gradient(lambda: tc.tanh(a @ b + bias).sum(), [a, b, bias])

    def test_softmax_with_mask_gradient(self, rng, float64):
        x = Parameter(rng.normal(size=(3, 4)), "x")
        w = rng.normal(size=(3, 4))
        mask = np.tril(np.ones((3, 4), dtype=bool))
        check_gradient(lambda: (tc.softmax(x, mask=mask) * w).sum(), [x])

    def test_layer_norm_gradient(self, rng, float64):
        x = Parameter(rng.normal(size=(2, 3, 6)), "x")
        gain = Parameter(rng.normal(size=6), "gain")
        bias = Parameter(rng.normal(size=6), "bias")
        w = rng.normal(size=(2, 3, 6))
        check_gradient(lambda: (tc.layer_norm(x, gain, bias) * w).sum(), [x, gain, bias])

    def test_shape_ops_gradient(self, rng, float64):
        x = Parameter(rng.normal(size=(2, 3, 4)), "x")
        y = Parameter(rng.normal(size=(2, 1, 4)), "y")
        w = rng.normal(size=(4, 2, 3))

        def loss():
            joined = tc.concat([y, x], axis=1)[:, :3, :]
            moved = joined.transpose(2, 0, 1).reshape(4, 2, 3)
            stacked = tc.stack([moved, moved * 2.0], axis=0).mean(axis=0)
            return (stacked * w).sum()

        check_gradient(loss, [x, y])

    def test_embedding_gradient_accumulates_repeats(self):
        weight = Parameter(np.zeros((4, 2)), "weight")
        ids = np.array([[1, 1, 3]])
        tc.backward(tc.embedding(weight, ids).sum(), [weight])
        np.testing.assert_array_equal(weight.grad, [[0, 0], [2, 2], [0, 0], [1, 1]])

    def test_stop_gradient_blocks(self):
        x = Parameter(np.array([2.0]), "x")
        loss = (x * tc.stop_gradient(x)).sum()
        tc.backward(loss, [x])
        assert float(x.grad[0]) == 2.0


class TestClip:
    """全局范数裁剪"""

    def test_under_threshold_unchanged(self):
        p = Parameter(np.array([0.03, 0.04]), "p")
        p.grad = p.data.copy()
        grads, total = tc.clip_global_norm([p], 0.1)
        assert total == pytest.approx(0.05)
        np.testing.assert_allclose(grads[0], [0.03, 0.04])

    def test_scaled_to_max_norm(self, float64):
        p = Parameter(np.zeros(2), "p")
        p.grad = np.array([0.3, 0.4])
        grads, total = tc.clip_global_norm([p], 0.1)
        assert total == pytest.approx(0.5)
        np.testing.assert_allclose(grads[0], [0.06, 0.08])
        assert np.linalg.norm(grads[0]) <= 0.1 + 1e-7

    def test_zero_grads(self):
        p = Parameter(np.zeros(3), "p")
        p.grad = np.zeros(3)
        grads, total = tc.clip_global_norm([p], 0.1)
        assert total == 0.0
        np.testing.assert_array_equal(grads[0], 0.0)

    def test_global_norm_across_parameters(self, rng):
        params = [Parameter(np.zeros(5), f"p{i}") for i in range(3)]
        for p in params:
            p.grad = rng.normal(size=5).astype(np.float32)
        grads, _ = tc.clip_global_norm(params, 0.1)
        norm = math.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads))
        assert norm <= 0.1 + 1e-6


class TestPrecision:
    """精度开关与无梯度模式"""

    def test_default_is_float32(self):
        assert Tensor([1.0]).dtype == np.float32

    def test_context_switch_restores(self):
        with tc.default_dtype("float64"):
            assert Tensor([1.0]).dtype == np.float64
        assert tc.get_default_dtype() is np.float32

    def test_unsupported_dtype(self):
        with pytest.raises(ConfigError):
            tc.set_default_dtype(np.float16)

    def test_no_grad_records_nothing(self):
        x = Parameter(np.ones(2), "x")
        with tc.no_grad():
            y = x * 2.0
        assert not y.requires_grad
        assert tc.is_grad_enabled()
