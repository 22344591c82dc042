"""
训练测试：学习率计划、交叉熵、Adam、CXLM 检查点、指标 CSV 与训练循环（含断点续训）
"""

import math
from pathlib import Path

import numpy as np
import pytest

import tensor_core as tc
from conftest import tiny_config
from corpus import SourceFile, build_token_stream, segment_stream
from define import ModelConfig, TrainSchedule
from errors import CheckpointError, NumericError
from models import LanguageModel
from tensor_core import Parameter, Tensor
from tokenizer import build_char_vocab
from training import (AdamState, Checkpoint, MetricsLog, adam_step, cross_entropy, load_checkpoint, lr_at,
                      model_from_checkpoint, read_metrics, save_checkpoint, stream_loss, train_run)


def random_batches(seed, n_tokens=200, seq_len=4, batch=2, vocab=11):
    ids = np.random.default_rng(seed).integers(0, vocab, size=n_tokens)
    return segment_stream(ids, seq_len=seq_len, batch_size=batch)


SHORT = TrainSchedule(lr_floor=1e-6, lr_peak=1e-2, warmup_iters=2, total_iters=6, epoch_iters=2)


class TestSchedule:
    """线性预热 + 半余弦衰减"""

    def test_reference_points(self):
        sched = TrainSchedule()
        assert lr_at(0, sched) == pytest.approx(1e-6)
        assert lr_at(2560, sched) == pytest.approx(2.505e-4)
        assert lr_at(5120, sched) == pytest.approx(5e-4)
        assert lr_at(25600, sched) == pytest.approx(1e-6)
        assert lr_at(30000, sched) == pytest.approx(1e-6)

    def test_monotone_phases(self):
        sched = TrainSchedule()
        warm = [lr_at(i, sched) for i in range(0, 5121, 512)]
        decay = [lr_at(i, sched) for i in range(5120, 25601, 512)]
        assert warm == sorted(warm)
        assert decay == sorted(decay, reverse=True)

    def test_epochs(self):
        assert TrainSchedule().epochs == 50


class TestLoss:
    """交叉熵"""

    def test_probability_rows(self, float64):
        probs = Tensor(np.array([[0.0, 1.0], [0.5, 0.5]]))
        assert cross_entropy(probs[0:1], np.array([1]), from_logits=False).item() == pytest.approx(0.0)
        assert cross_entropy(probs[1:2], np.array([0]), from_logits=False).item() == pytest.approx(0.693147, abs=1e-6)
        assert cross_entropy(probs, np.array([1, 0]), from_logits=False).item() == pytest.approx(0.346574, abs=1e-6)

    def test_zero_probability_is_clamped(self, float64, capsys):
        loss = cross_entropy(Tensor(np.array([[1.0, 0.0]])), np.array([1]), from_logits=False)
        assert math.isfinite(loss.item())
        assert loss.item() == pytest.approx(-math.log(np.finfo(np.float64).tiny))
        assert "⚠" in capsys.readouterr().out

    def test_uniform_logits(self, float64):
        loss = cross_entropy(Tensor(np.zeros((2, 3, 7))), np.zeros((2, 3), dtype=np.int64))
        assert loss.item() == pytest.approx(math.log(7), abs=1e-12)


class TestAdam:
    """Adam 更新"""

    def test_zero_gradient(self):
        p = Parameter(np.array([1.0, -2.0]), "p")
        state = AdamState.zeros([p])
        adam_step([p], [np.zeros(2)], state, 1e-3)
        np.testing.assert_array_equal(p.data, [1.0, -2.0])
        assert state.t == 1

    def test_first_step(self):
        p = Parameter(np.array([1.0]), "p")
        state = AdamState.zeros([p])
        adam_step([p], [np.array([0.5])], state, 1e-3)
        assert p.data[0] - 1.0 == pytest.approx(-1e-3 * 0.5 / (0.5 + 1e-8), rel=1e-9)

    def test_second_moment_non_negative(self, rng):
        p = Parameter(np.zeros(5), "p")
        state = AdamState.zeros([p])
        for _ in range(20):
            adam_step([p], [rng.normal(size=5)], state, 1e-2)
            assert np.all(state.v["p"] >= 0)


def make_checkpoint(model, memory=None):
    params = model.parameters()
    return Checkpoint(
        model_config=model.config, params=model.state_dict(), adam=AdamState.zeros(params), iteration=7,
        rng_state=np.random.default_rng(0).bit_generator.state, vocab_hash="abc123",
        memory=memory.arrays() if memory is not None else {}, next_batch=2, best_val_loss=1.5,
        run_config={"seed": 0, "precision": "float32"},
    )


class TestCheckpoint:
    """CXLM 检查点"""

    def test_roundtrip_bitwise(self, tmp_path, rng):
        model = LanguageModel(tiny_config(), seed=4)
        _, memory = model(rng.integers(0, 11, size=(2, 4)))
        cp = make_checkpoint(model, memory)
        cp.adam.m["embed.input"] = rng.normal(size=(11, 8)).astype(np.float32)
        path = tmp_path / "a.cxlm"
        save_checkpoint(cp, path)
        loaded = load_checkpoint(path)
        assert loaded.model_config == model.config
        assert loaded.iteration == 7 and loaded.next_batch == 2
        assert loaded.vocab_hash == "abc123"
        assert loaded.best_val_loss == 1.5
        assert loaded.rng_state == cp.rng_state
        assert loaded.run_config == cp.run_config
        for name, arr in cp.params.items():
            assert loaded.params[name].dtype == arr.dtype
            np.testing.assert_array_equal(loaded.params[name], arr)
        np.testing.assert_array_equal(loaded.adam.m["embed.input"], cp.adam.m["embed.input"])
        assert loaded.memory.keys() == cp.memory.keys()
        for name, arr in cp.memory.items():
            np.testing.assert_array_equal(loaded.memory[name], arr)

    def test_infinite_best_loss(self, tmp_path):
        cp = make_checkpoint(LanguageModel(tiny_config()))
        cp.best_val_loss = math.inf
        save_checkpoint(cp, tmp_path / "b.cxlm")
        assert load_checkpoint(tmp_path / "b.cxlm").best_val_loss == math.inf

    def test_model_from_checkpoint(self, tmp_path, rng):
        model = LanguageModel(tiny_config(arch="gru"), seed=4)
        save_checkpoint(make_checkpoint(model), tmp_path / "c.cxlm")
        restored = model_from_checkpoint(load_checkpoint(tmp_path / "c.cxlm"))
        ids = rng.integers(0, 11, size=(1, 4))
        np.testing.assert_array_equal(restored(ids)[0].data, model(ids)[0].data)

    @pytest.mark.parametrize("corrupt", ["magic", "version", "truncated", "trailing"])
    def test_rejects_corrupt_files(self, tmp_path, corrupt):
        path = tmp_path / "d.cxlm"
        save_checkpoint(make_checkpoint(LanguageModel(tiny_config())), path)
        raw = bytearray(path.read_bytes())
        if corrupt == "magic":
            raw[:4] = b"XXXX"
        elif corrupt == "version":
            raw[4:8] = (2).to_bytes(4, "little")
        elif corrupt == "truncated":
            raw = raw[:-3]
        else:
            raw += b"\x00"
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "none.cxlm")


class TestMetrics:
    """指标 CSV"""

    def test_write_and_read(self, tmp_path):
        path = tmp_path / "metrics.csv"
        with MetricsLog(path, ["# seed = 0", "# arch = txl"]) as log:
            log.append(0, 1, "train", math.log(2), 1e-6, 0.5, 0.01)
            log.append(1, 1, "validation", math.log(4), 2e-6, None, 0.02)
        text = path.read_text(encoding="utf-8")
        assert text.startswith("# seed = 0\n# arch = txl\niter,epoch,split,")
        rows = read_metrics(path)
        assert [r["split"] for r in rows] == ["train", "validation"]
        assert rows[0]["bpc"] == pytest.approx(1.0)
        assert rows[1]["perplexity"] == pytest.approx(4.0)
        assert rows[1]["grad_norm"] is None

    def test_append_keeps_header_once(self, tmp_path):
        path = tmp_path / "metrics.csv"
        with MetricsLog(path) as log:
            log.append(0, 1, "train", 1.0, 1e-6, 0.1, 0.0)
        with MetricsLog(path, ["# ignored = 1"], append=True) as log:
            log.append(1, 1, "train", 0.9, 1e-6, 0.1, 0.0)
        text = path.read_text(encoding="utf-8")
        assert text.count("iter,epoch") == 1
        assert "# ignored" not in text
        assert [r["iter"] for r in read_metrics(path)] == [0, 1]


class TestStreamLoss:
    """记忆跨片段传递的评估损失"""

    def test_streamed_matches_single_pass(self, float64):
        model = LanguageModel(tiny_config(arch="gru"), seed=6)
        ids = np.random.default_rng(3).integers(0, 11, size=41)
        batches = segment_stream(ids, seq_len=8, batch_size=1)
        loss, count = stream_loss(model, batches)
        assert count == 40
        with tc.no_grad():
            logits, _ = model(ids[None, :40])
            expected = cross_entropy(logits, ids[None, 1:41]).item()
        assert loss == pytest.approx(expected, abs=1e-9)

    def test_empty(self):
        loss, count = stream_loss(LanguageModel(tiny_config()), [])
        assert count == 0 and math.isnan(loss)


class TestTrainRun:
    """训练循环"""

    def run(self, out_dir, **kwargs):
        model = LanguageModel(tiny_config(dropout=0.1, init_std=0.02), seed=0)
        result = train_run(model, random_batches(0), random_batches(1, n_tokens=60), SHORT, out_dir,
                           seed=5, vocab_hash="v1", show_progress=False, **kwargs)
        return model, result

    def test_metrics_and_checkpoints(self, tmp_path):
        _, result = self.run(tmp_path / "run")
        rows = read_metrics(result.metrics_path)
        train = [r for r in rows if r["split"] == "train"]
        valid = [r for r in rows if r["split"] == "validation"]
        assert len(train) == 6 and len(valid) == 3
        assert [r["iter"] for r in train] == list(range(6))
        assert [r["epoch"] for r in valid] == [1, 2, 3]
        assert result.iterations == 6
        assert result.last_checkpoint.exists() and result.best_checkpoint.exists()
        assert result.best_val_loss == pytest.approx(min(r["loss"] for r in valid), abs=1e-6)
        assert load_checkpoint(result.last_checkpoint).iteration == 6

    def test_initial_loss_near_uniform(self, tmp_path):
        _, result = self.run(tmp_path / "run")
        first = read_metrics(result.metrics_path)[0]["loss"]
        assert abs(first - math.log(11)) <= 0.1 * math.log(11)

    def test_deterministic(self, tmp_path):
        a, _ = self.run(tmp_path / "a")
        b, _ = self.run(tmp_path / "b")
        losses = [[r["loss"] for r in read_metrics(tmp_path / d / "metrics.csv")] for d in ("a", "b")]
        assert losses[0] == losses[1]
        for p, q in zip(a.parameters(), b.parameters()):
            np.testing.assert_array_equal(p.data, q.data)

    def test_resume_matches_uninterrupted(self, tmp_path):
        full, _ = self.run(tmp_path / "full")
        _, partial = self.run(tmp_path / "resumed", stop_after=3)
        assert partial.iterations == 3
        resumed, result = self.run(tmp_path / "resumed", resume=str(partial.last_checkpoint))
        assert result.iterations == 6

        def train_losses(path):
            return [(r["iter"], r["loss"]) for r in read_metrics(path) if r["split"] == "train"]

        assert train_losses(tmp_path / "resumed" / "metrics.csv") == train_losses(tmp_path / "full" / "metrics.csv")
        for p, q in zip(full.parameters(), resumed.parameters()):
            np.testing.assert_array_equal(p.data, q.data)

    def test_resume_rejects_other_vocabulary(self, tmp_path):
        _, partial = self.run(tmp_path / "a", stop_after=1)
        model = LanguageModel(tiny_config(), seed=0)
        with pytest.raises(CheckpointError):
            train_run(model, random_batches(0), [], SHORT, tmp_path / "a", vocab_hash="other",
                      resume=str(partial.last_checkpoint), show_progress=False)

    def test_non_finite_loss_names_iteration(self, tmp_path):
        model = LanguageModel(tiny_config(), seed=0)
        model.embedding.output_bias.data[0] = np.nan
        with pytest.raises(NumericError) as info:
            train_run(model, random_batches(0), [], SHORT, tmp_path / "nan", show_progress=False)
        assert "0" in str(info.value)


@pytest.mark.slow
class TestOverfit:
    """单文件语料上的 4 层 Transformer-XL 应能把训练 BPC 压到 0.1 以下"""

    def test_single_file_training_bpc(self, tmp_path):
        path = Path(__file__).resolve().parent.parent / "data" / "corpus" / "text_wrap.py"
        source = SourceFile(path=path.name, text=path.read_text(encoding="utf-8"))
        vocab = build_char_vocab([source.text])
        batches = segment_stream(build_token_stream([source], vocab), seq_len=64, batch_size=4)
        config = ModelConfig(arch="txl", depth=4, hidden=128, heads=4, ffd_inner=512, vocab_size=vocab.size,
                             seq_len=64, mem_len=64, dropout=0.0)
        sched = TrainSchedule(lr_floor=1e-6, lr_peak=3e-3, warmup_iters=50, total_iters=500, epoch_iters=100)
        result = train_run(LanguageModel(config, seed=0), batches, [], sched, tmp_path / "overfit",
                           seed=0, vocab_hash=vocab.fingerprint(), show_progress=False)
        train = [r for r in read_metrics(result.metrics_path) if r["split"] == "train"]
        assert len(train) == 500
        assert train[-1]["bpc"] < 0.1
