"""
模型测试：注意力、Transformer-XL 记忆与停止梯度、端到端梯度检查、LSTM/GRU
"""

import numpy as np
import pytest

import tensor_core as tc
from conftest import tiny_config
from errors import CheckpointError, ShapeError, VocabularyError
from models import (GRUParams, LanguageModel, LSTMParams, MemoryState, causal_mask, count_parameters, ffd,
                    gru_cell, lstm_cell, rel_shift, self_attention, sinusoid_table, transformer_forward,
                    txl_layer)
from tensor_core import Parameter, Tensor
from training import cross_entropy


def zeros(name, *shape):
    return Parameter(np.zeros(shape), name)


class TestAttention:
    """自注意力与相对位置"""

    def test_causal_mask_counts(self):
        mask = causal_mask(3, 2)
        assert mask.shape == (3, 5)
        assert mask.sum(axis=1).tolist() == [3, 4, 5]

    def test_single_token_weight_is_one(self, float64):
        config = tiny_config(hidden=1, heads=1, ffd_inner=1, vocab_size=3, seq_len=1, mem_len=0)
        p = LanguageModel(config, seed=5).layers[0]
        x = Tensor(np.array([[[2.0]]]))
        out = self_attention(x, None, p, config)
        expected = 2.0 * p.W_V.data[0, 0] * p.W_O.data[0, 0]
        np.testing.assert_allclose(out.data, [[[expected]]], rtol=1e-12)

    def test_memory_extends_keys(self, float64, rng):
        config = tiny_config()
        p = LanguageModel(config).layers[0]
        x = Tensor(rng.normal(size=(1, 3, 8)))
        mem = Tensor(rng.normal(size=(1, 2, 8)))
        assert self_attention(x, mem, p, config).shape == (1, 3, 8)
        with pytest.raises(ShapeError):
            self_attention(x, mem, p, config, mask=causal_mask(3, 0))

    def test_memory_receives_no_gradient(self, float64, rng):
        config = tiny_config()
        p = LanguageModel(config).layers[0]
        x = Parameter(rng.normal(size=(2, 3, 8)), "x")
        mem = Parameter(rng.normal(size=(2, 4, 8)), "mem")
        tc.backward(self_attention(x, mem, p, config).sum(), [x])
        assert mem.grad is None
        assert np.any(x.grad != 0)

    def test_rel_shift_alignment(self):
        raw = np.arange(15, dtype=np.float64).reshape(1, 3, 5)
        shifted = rel_shift(Tensor(raw)).data[0]
        for i in range(3):
            for j in range(i + 3):
                assert shifted[i, j] == raw[0, i, j + 2 - i]

    def test_sinusoid_columns(self, float64):
        table = sinusoid_table(np.array([0, 1, 2]), 4)
        pos = np.array([0.0, 1.0, 2.0])
        np.testing.assert_allclose(table[:, 0], np.sin(pos))
        np.testing.assert_allclose(table[:, 1], np.cos(pos))
        np.testing.assert_allclose(table[:, 2], np.sin(pos / 100))
        np.testing.assert_allclose(table[:, 3], np.cos(pos / 100))


class TestLayer:
    """FFD 与一层 Transformer-XL"""

    def test_ffd_zero_weights(self, float64, rng):
        p = LanguageModel(tiny_config()).layers[0]
        for w in (p.W_1, p.W_2, p.b_1, p.b_2):
            w.data[...] = 0.0
        x = Tensor(rng.normal(size=(2, 3, 8)))
        out = ffd(x, p)
        assert out.shape == x.shape
        np.testing.assert_array_equal(out.data, 0.0)

    def test_ffd_identity_is_gelu(self, float64):
        config = tiny_config(hidden=1, heads=1, ffd_inner=1, vocab_size=3)
        p = LanguageModel(config).layers[0]
        p.W_1.data[...] = 1.0
        p.W_2.data[...] = 1.0
        out = ffd(Tensor(np.array([[[1.0]]])), p)
        assert out.data.item() == pytest.approx(0.841345, abs=1e-6)

    def test_zero_sublayers_pass_residual(self, float64, rng):
        config = tiny_config()
        p = LanguageModel(config).layers[0]
        for w in (p.W_Q, p.W_K, p.W_V, p.W_O, p.W_R, p.u, p.v, p.W_1, p.b_1, p.W_2, p.b_2):
            w.data[...] = 0.0
        p.norm1_bias.data[...] = 0.1
        p.norm2_bias.data[...] = 0.2
        x = Tensor(rng.normal(size=(2, 4, 8)))
        out = txl_layer(x, None, p, config)
        np.testing.assert_allclose(out.data, x.data + 0.3, atol=1e-12)

    def test_layer_output_finite(self, rng):
        config = tiny_config()
        p = LanguageModel(config).layers[1]
        x = Tensor(rng.normal(size=(2, 4, 8)).astype(np.float32))
        out = txl_layer(x, Tensor(rng.normal(size=(2, 4, 8)).astype(np.float32)), p, config,
                        training=True, rng=rng)
        assert out.shape == x.shape
        assert np.all(np.isfinite(out.data))


class TestTransformerXL:
    """Transformer-XL 前向、记忆与梯度"""

    def test_logits_shape_and_distribution(self, rng):
        model = LanguageModel(tiny_config())
        logits, memory = model(rng.integers(0, 11, size=(3, 4)))
        assert logits.shape == (3, 4, 11)
        probs = tc.softmax(logits, axis=-1).data
        np.testing.assert_allclose(probs.sum(axis=-1), 1.0, atol=1e-6)
        assert [m.shape for m in memory.layers] == [(3, 4, 8)] * 2

    def test_memory_keeps_last_positions(self, float64, rng):
        model = LanguageModel(tiny_config(mem_len=6))
        seg1, seg2 = rng.integers(0, 11, size=(2, 2, 4))
        _, memory = model(seg1)
        _, memory = model(seg2, memory)
        assert memory.layers[0].shape == (2, 6, 8)
        np.testing.assert_array_equal(memory.layers[0].data[:, -4:], model.embedding.input.data[seg2])
        np.testing.assert_array_equal(memory.layers[0].data[:, :2], model.embedding.input.data[seg1[:, 2:]])

    def test_memory_holds_every_layer_input(self, float64, rng):
        config = tiny_config(depth=3, mem_len=6)
        model = LanguageModel(config, seed=5)
        seg1, seg2 = rng.integers(0, 11, size=(2, 2, 4))
        _, first = model(seg1)
        _, second = model(seg2, first)

        # 逐层手动前向，记录每层输入
        inputs = []
        x = tc.embedding(model.embedding.input, seg2)
        for l, p in enumerate(model.layers):
            inputs.append(x.data.copy())
            x = txl_layer(x, first.layers[l], p, config)
        assert len(second.layers) == config.depth
        for l in range(config.depth):
            expected = np.concatenate([first.layers[l].data, inputs[l]], axis=1)[:, -6:]
            assert second.layers[l].shape == (2, 6, 8)
            np.testing.assert_array_equal(second.layers[l].data, expected)
            assert second.layers[l]._parents == ()

    def test_zero_memory_matches_plain_transformer(self, rng):
        config = tiny_config(mem_len=0)
        model = LanguageModel(config, seed=3)
        ids = rng.integers(0, 11, size=(2, 4))
        logits, memory = model(ids)
        _, memory = model(ids, memory)
        again, _ = model(ids, memory)
        plain = transformer_forward(ids, model.embedding, model.layers, config)
        np.testing.assert_array_equal(logits.data, plain.data)
        np.testing.assert_array_equal(again.data, plain.data)

    def test_causality(self, float64, rng):
        model = LanguageModel(tiny_config(seq_len=8))
        ids = rng.integers(0, 11, size=(1, 8))
        changed = ids.copy()
        changed[0, 5] = (ids[0, 5] + 1) % 11
        a, _ = model(ids)
        b, _ = model(changed)
        np.testing.assert_allclose(a.data[:, :5], b.data[:, :5], atol=1e-12)
        assert not np.allclose(a.data[:, 5], b.data[:, 5])

    def test_memory_changes_predictions(self, float64, rng):
        model = LanguageModel(tiny_config())
        seg1, seg2 = rng.integers(0, 11, size=(2, 2, 4))
        _, memory = model(seg1)
        with_memory, _ = model(seg2, memory)
        without, _ = model(seg2)
        assert not np.allclose(with_memory.data, without.data)

    def test_memory_is_constant_for_gradients(self, float64, rng):
        model = LanguageModel(tiny_config())
        seg1, seg2, targets = rng.integers(0, 11, size=(3, 2, 4))
        _, memory = model(seg1)

        def grads(mem):
            params = model.parameters()
            logits, _ = model(seg2, mem)
            tc.backward(cross_entropy(logits, targets), params)
            out = [p.grad.copy() for p in params]
            for p in params:
                p.zero_grad()
            return out

        constant = MemoryState(layers=[Tensor(m.data.copy()) for m in memory.layers])
        for a, b in zip(grads(memory), grads(constant)):
            np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize("pos_encoding", ["relative", "absolute"])
    def test_end_to_end_gradient_check(self, float64, rng, pos_encoding):
        model = LanguageModel(tiny_config(pos_encoding=pos_encoding), seed=11)
        seg1, seg2, targets = rng.integers(0, 11, size=(3, 2, 4))
        _, memory = model(seg1)

        def loss():
            logits, _ = model(seg2, memory)
            return cross_entropy(logits, targets)

        def loss_value():
            with tc.no_grad():
                return float(loss().data)

        params = model.parameters()
        tc.backward(loss(), params)
        for p in params:
            analytic = p.grad.copy()
            numeric = tc.numerical_gradient(loss_value, p.data, step=1e-5)
            assert tc.relative_error(analytic, numeric) <= 1e-4, p.name

    def test_out_of_range_id(self):
        model = LanguageModel(tiny_config())
        with pytest.raises(VocabularyError):
            model(np.array([[0, 11]]))

    def test_absolute_mode_has_no_relative_parameters(self):
        names = LanguageModel(tiny_config(pos_encoding="absolute")).named_parameters()
        assert "layers.0.W_R" not in names and "layers.0.u" not in names
        assert "layers.0.W_R" in LanguageModel(tiny_config()).named_parameters()


class TestRecurrent:
    """LSTM / GRU 基线"""

    def test_lstm_cell_zero_weights(self, float64):
        p = LSTMParams(W_x=zeros("W_x", 1, 4), W_h=zeros("W_h", 1, 4), b=zeros("b", 4))
        x, h = Tensor(np.array([[0.7]])), Tensor(np.zeros((1, 1)))
        h1, c1 = lstm_cell(x, h, Tensor(np.zeros((1, 1))), p)
        assert h1.data.item() == 0.0
        h2, c2 = lstm_cell(x, h, Tensor(np.ones((1, 1))), p)
        assert c2.data.item() == pytest.approx(0.5)
        assert h2.data.item() == pytest.approx(0.231059, abs=1e-6)

    def test_gru_cell_zero_weights(self, float64):
        p = GRUParams(W_x=zeros("W_x", 1, 3), W_hzr=zeros("W_hzr", 1, 2), W_hn=zeros("W_hn", 1, 1),
                      b=zeros("b", 3))
        h = gru_cell(Tensor(np.array([[0.3]])), Tensor(np.ones((1, 1))), p)
        assert h.data.item() == pytest.approx(0.5)

    def test_gru_closed_update_gate_keeps_state(self, float64, rng):
        H = 3
        p = GRUParams(W_x=Parameter(rng.normal(size=(H, 3 * H)), "W_x"),
                      W_hzr=Parameter(rng.normal(size=(H, 2 * H)), "W_hzr"),
                      W_hn=Parameter(rng.normal(size=(H, H)), "W_hn"),
                      b=Parameter(np.concatenate([np.full(H, -1e3), np.zeros(2 * H)]), "b"))
        h = Tensor(rng.normal(size=(2, H)))
        out = gru_cell(Tensor(rng.normal(size=(2, H)) * 0.01), h, p)
        np.testing.assert_array_equal(out.data, h.data)

    @pytest.mark.parametrize("arch", ["lstm", "gru"])
    def test_streamed_matches_single_pass(self, float64, rng, arch):
        model = LanguageModel(tiny_config(arch=arch), seed=2)
        ids = rng.integers(0, 11, size=(2, 8))
        whole, _ = model(ids)
        first, state = model(ids[:, :4])
        second, _ = model(ids[:, 4:], state)
        np.testing.assert_allclose(np.concatenate([first.data, second.data], axis=1), whole.data, atol=1e-9)

    @pytest.mark.parametrize("arch", ["lstm", "gru"])
    def test_state_carries_across_segments(self, float64, rng, arch):
        model = LanguageModel(tiny_config(arch=arch))
        state = model.initial_memory(2)
        assert all(np.all(h.data == 0) for h in state.hidden)
        seg1, seg2 = rng.integers(0, 11, size=(2, 2, 4))
        logits, state = model(seg1, state)
        assert logits.shape == (2, 4, 11)
        carried, _ = model(seg2, state)
        fresh, _ = model(seg2)
        assert not np.allclose(carried.data, fresh.data)
        assert not any(h.requires_grad for h in state.hidden)


class TestParameters:
    """参数枚举、计数与载入"""

    def test_count(self):
        assert count_parameters([Parameter(np.zeros((512, 512), dtype=np.float32), "w")]) == 262144
        small = LanguageModel(tiny_config(hidden=16, heads=4, depth=4))
        deep = LanguageModel(tiny_config(hidden=16, heads=4, depth=8))
        assert count_parameters(deep) > count_parameters(small)
        assert count_parameters(small) == sum(p.size for p in small.parameters())

    def test_names_unique_and_ordered(self):
        model = LanguageModel(tiny_config())
        names = [p.name for p in model.parameters()]
        assert len(names) == len(set(names))
        assert names[0] == "embed.input"
        assert names[-2:] == ["embed.output.weight", "embed.output.bias"]
        assert names == [p.name for p in LanguageModel(tiny_config(), seed=9).parameters()]

    def test_load_state_dict(self, rng):
        source = LanguageModel(tiny_config(), seed=1)
        target = LanguageModel(tiny_config(), seed=2)
        target.load_state_dict(source.state_dict())
        ids = rng.integers(0, 11, size=(1, 4))
        np.testing.assert_array_equal(source(ids)[0].data, target(ids)[0].data)

    def test_load_state_dict_rejects_mismatch(self):
        model = LanguageModel(tiny_config())
        state = dict(model.state_dict())
        state["embed.input"] = np.zeros((3, 3), dtype=np.float32)
        with pytest.raises(CheckpointError):
            model.load_state_dict(state)
        state.pop("embed.input")
        with pytest.raises(CheckpointError):
            model.load_state_dict(state)
