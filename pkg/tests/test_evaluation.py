"""
评估测试：BPC / 困惑度、测试流评估、训练耗时基准、多种子汇总与验证曲线
"""

import csv
import math
import statistics

import numpy as np
import pytest

from conftest import tiny_config
from corpus import segment_stream
from define import EvalReport
from errors import ConfigError, NumericError, VocabularyError
from evaluation import (benchmark_training_time, bpc, evaluate, format_report, perplexity, summarize_runs,
                        validation_curves, write_rows)
from models import LanguageModel
from tokenizer import CHARACTER, SUBWORD
from training import MetricsLog


def report(model="TXL-4", kind=CHARACTER, loss=1.0, seed=0):
    return EvalReport(model=model, depth=4, kind=kind, token_count=100, loss=loss, bpc=bpc(loss),
                      perplexity=perplexity(loss), seconds=1.0, tokens_per_second=100.0, seed=seed,
                      parameters=1234)


class TestMetrics:
    """由 loss 推出的指标"""

    def test_bpc(self):
        assert bpc(math.log(2)) == pytest.approx(1.0)
        assert bpc(0.0) == 0.0
        assert bpc(1.1297 * math.log(2)) == pytest.approx(1.1297)

    def test_perplexity(self):
        assert perplexity(0.0) == 1.0
        assert perplexity(math.log(2.7185)) == pytest.approx(2.7185)
        assert perplexity(701.0) == math.inf
        values = [perplexity(x) for x in (0.1, 0.5, 1.0, 3.0)]
        assert values == sorted(values) and len(set(values)) == 4

    def test_negative_loss(self):
        with pytest.raises(NumericError):
            bpc(-0.1)
        with pytest.raises(NumericError):
            perplexity(-0.1)

    def test_headline_by_kind(self):
        assert report(kind=CHARACTER).headline == report().bpc
        assert report(kind=SUBWORD).headline == report().perplexity


class TestEvaluate:
    """测试流评估"""

    def batches(self, n_tokens=90):
        ids = np.random.default_rng(2).integers(0, 11, size=n_tokens)
        return segment_stream(ids, seq_len=4, batch_size=2)

    def test_uniform_model(self, float64):
        model = LanguageModel(tiny_config())
        model.embedding.output_weight.data[...] = 0.0
        model.embedding.output_bias.data[...] = 0.0
        result = evaluate(model, self.batches(), kind=SUBWORD)
        assert result.loss == pytest.approx(math.log(11), abs=1e-12)
        assert result.perplexity == pytest.approx(11.0)
        assert result.token_count == 2 * 11 * 4
        assert result.model == "TXL-2"

    def test_deterministic(self):
        model = LanguageModel(tiny_config(), seed=3)
        a = evaluate(model, self.batches())
        b = evaluate(model, self.batches())
        assert (a.loss, a.bpc, a.perplexity, a.token_count) == (b.loss, b.bpc, b.perplexity, b.token_count)

    def test_vocabulary_mismatch(self):
        model = LanguageModel(tiny_config())
        with pytest.raises(VocabularyError):
            evaluate(model, self.batches(), vocab_hash="aaa", expected_vocab_hash="bbb")

    def test_empty_stream(self):
        with pytest.raises(ConfigError):
            evaluate(LanguageModel(tiny_config()), [])

    def test_format_report(self):
        text = format_report(report())
        assert "TXL-4" in text and "BPC 1.4427" in text
        assert "困惑度" in format_report(report(kind=SUBWORD))


class TestBenchmark:
    """归一化训练耗时"""

    def test_too_few_iterations(self):
        with pytest.raises(ConfigError):
            benchmark_training_time([tiny_config()], iterations=29)

    def test_fastest_is_one(self):
        configs = [tiny_config(arch="gru", depth=1), tiny_config(depth=1)]
        rows = benchmark_training_time(configs, iterations=30, batch_size=2, warmup=1, show_progress=False)
        assert [r.model for r in rows] == ["GRU-1", "TXL-1"]
        assert min(r.normalized for r in rows) == 1.0
        assert all(r.normalized >= 1.0 and r.median_seconds > 0 for r in rows)
        assert all(r.parameters > 0 for r in rows)


class TestSummary:
    """多种子汇总与验证曲线"""

    def test_mean_and_sample_std(self):
        rows = summarize_runs([report(loss=x * math.log(2), seed=i) for i, x in enumerate((1.0, 1.2, 1.4))]
                              + [report(model="GRU-4", loss=2.0)])
        txl, gru = rows
        assert txl.runs == 3 and gru.runs == 1
        assert txl.bpc_mean == pytest.approx(1.2)
        assert txl.bpc_std == pytest.approx(statistics.stdev([1.0, 1.2, 1.4]))
        assert gru.bpc_std == 0.0
        assert txl.headline == (txl.bpc_mean, txl.bpc_std)

    def test_curves_use_best_seed(self, tmp_path):
        runs = []
        for seed, losses in enumerate(([2.0, 1.5], [1.9, 1.2])):
            path = tmp_path / f"m{seed}.csv"
            with MetricsLog(path) as log:
                for epoch, loss in enumerate(losses, start=1):
                    log.append(epoch * 4 - 1, epoch, "train", loss + 0.1, 1e-4, 0.1, 0.0)
                    log.append(epoch * 4, epoch, "validation", loss, 1e-4, None, 0.0)
            runs.append(("TXL-4", seed, path))
        points = validation_curves(runs)
        assert [(p.epoch, p.iter) for p in points] == [(1, 4), (2, 8)]
        assert points[-1].bpc == pytest.approx(1.2 / math.log(2), abs=1e-5)

    def test_write_rows_append(self, tmp_path):
        path = tmp_path / "eval_reports.csv"
        write_rows([report()], path, append=True)
        write_rows([report(seed=1)], path, append=True)
        with open(path, encoding="utf-8", newline="") as f:
            rows = list(csv.DictReader(f))
        assert [r["seed"] for r in rows] == ["0", "1"]
        assert rows[0]["bpc"] == f"{1 / math.log(2):.6f}"
