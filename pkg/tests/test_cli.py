"""
命令行测试：子命令串联（ingest → tokenize → train → eval → sample）、实验网格与退出码
"""

import csv
import math
from pathlib import Path

import pytest

import cli
from cli import dispatch, parse_models, sample
from errors import UsageError
from openpyxl import load_workbook
from training import load_checkpoint, read_metrics

TINY_FLAGS = ["--depth", "1", "--hidden", "8", "--heads", "2", "--ffd-inner", "16", "--seq-len", "8",
              "--mem-len", "8", "--batch", "2", "--epochs", "2", "--iters-per-epoch", "2", "--warmup", "1",
              "--dropout", "0.0", "--quiet"]


@pytest.fixture
def flags(corpus_dir, tmp_path):
    return ["--corpus-dir", str(corpus_dir), "--out-dir", str(tmp_path / "run")] + TINY_FLAGS


class TestPipeline:
    """单次运行的完整流程"""

    def test_ingest_tokenize_train_eval_sample(self, flags, tmp_path, capsys):
        run = tmp_path / "run"
        assert dispatch(["ingest"] + flags) == 0
        assert (run / "split_manifest.tsv").exists()
        assert dispatch(["tokenize", "--vocab", "char"] + flags) == 0
        assert (run / "vocab.txt").exists()

        assert dispatch(["train"] + flags) == 0
        assert (run / "run_config.txt").exists()
        rows = read_metrics(run / "metrics.csv")
        assert len([r for r in rows if r["split"] == "train"]) == 4
        assert len([r for r in rows if r["split"] == "validation"]) == 2
        cp = load_checkpoint(run / "checkpoints" / "last.cxlm")
        assert cp.iteration == 4
        assert cp.model_config.hidden == 8 and cp.model_config.depth == 1

        assert dispatch(["eval"] + flags) == 0
        with open(run / "eval_reports.csv", encoding="utf-8", newline="") as f:
            reports = list(csv.DictReader(f))
        assert len(reports) == 1 and reports[0]["model"] == "TXL-1"
        assert float(reports[0]["bpc"]) > 0

        capsys.readouterr()
        assert dispatch(["sample", "--checkpoint", str(run / "checkpoints" / "best.cxlm"), "--prompt", "def ",
                         "--length", "5", "--temperature", "0"] + flags) == 0
        assert "def " in capsys.readouterr().out

    def test_sample_is_reproducible(self, flags, tmp_path):
        assert dispatch(["train", "--stop-after", "2"] + flags) == 0
        checkpoint = tmp_path / "run" / "checkpoints" / "last.cxlm"
        a = sample(checkpoint, "x = ", 6, temperature=0.8, seed=4)
        b = sample(checkpoint, "x = ", 6, temperature=0.8, seed=4)
        assert a == b and a.startswith("x = ")
        assert sample(checkpoint, "", 3, temperature=0).startswith("\n")

    def test_resume(self, flags, tmp_path):
        assert dispatch(["train", "--stop-after", "3"] + flags) == 0
        last = tmp_path / "run" / "checkpoints" / "last.cxlm"
        assert load_checkpoint(last).iteration == 3
        assert dispatch(["train", "--resume", str(last)] + flags) == 0
        assert load_checkpoint(last).iteration == 4
        iters = [r["iter"] for r in read_metrics(tmp_path / "run" / "metrics.csv") if r["split"] == "train"]
        assert iters == [0, 1, 2, 3]

    def test_rnn_and_bpe(self, flags, tmp_path):
        assert dispatch(["train", "--arch", "gru", "--vocab", "bpe", "--vocab-size", "120"] + flags) == 0
        cp = load_checkpoint(tmp_path / "run" / "checkpoints" / "best.cxlm")
        assert cp.model_config.arch == "gru"
        assert cp.model_config.vocab_size <= 120


class TestExperiment:
    """模型 × 种子网格"""

    def test_grid(self, flags, tmp_path):
        assert dispatch(["experiment", "--models", "txl:1,gru:1", "--seeds", "0,1"] + flags) == 0
        root = tmp_path / "run"
        for name in ("txl-1-seed0", "txl-1-seed1", "gru-1-seed0", "gru-1-seed1"):
            assert (root / name / "checkpoints" / "best.cxlm").exists()
            assert (root / name / "vocab.txt").exists()
        with open(root / "summary.csv", encoding="utf-8", newline="") as f:
            summary = list(csv.DictReader(f))
        assert [(r["model"], r["runs"]) for r in summary] == [("TXL-1", "2"), ("GRU-1", "2")]
        with open(root / "curves.csv", encoding="utf-8", newline="") as f:
            curves = list(csv.DictReader(f))
        assert {r["model"] for r in curves} == {"TXL-1", "GRU-1"}
        assert set(load_workbook(root / "results.xlsx").sheetnames) == {"summary", "curves"}


class TestExitCodes:
    """错误类别到退出码"""

    def test_no_command(self):
        assert dispatch([]) == 1

    def test_unknown_flag(self):
        assert dispatch(["train", "--no-such-flag"]) == 1

    def test_help(self):
        assert dispatch(["--help"]) == 0

    def test_missing_corpus(self, tmp_path):
        assert dispatch(["ingest", "--corpus-dir", str(tmp_path / "missing"), "--out-dir", str(tmp_path)]) == 2

    def test_bad_config_value(self, flags):
        assert dispatch(["train", "--threshold", "2.0"] + flags) == 1

    def test_too_few_bench_iterations(self, flags):
        assert dispatch(["bench", "--iterations", "29"] + flags) == 1

    def test_missing_checkpoint(self, flags, tmp_path):
        assert dispatch(["eval", "--checkpoint", str(tmp_path / "none.cxlm")] + flags) == 2


class TestParsing:
    """参数解析辅助函数"""

    def test_parse_models(self):
        assert parse_models("lstm:4, GRU-4,txl:8") == [("lstm", 4), ("gru", 4), ("txl", 8)]
        with pytest.raises(UsageError):
            parse_models("txl")
        with pytest.raises(UsageError):
            parse_models(" , ")

    def test_bench_configs_follow_width(self):
        config = {**cli.DEFAULT_RUN_CONFIG, "hidden": 16, "heads": 4}
        configs = cli.bench_configs(config, [("lstm", 4), ("txl", 8)], vocab_size=50)
        assert [(c.label, c.hidden, c.vocab_size) for c in configs] == [("LSTM-4", 16, 50), ("TXL-8", 16, 50)]


@pytest.mark.slow
class TestCapacity:
    """自带语料上的短训练：验证 loss 应明显低于均匀分布"""

    def test_txl_learns_bundled_corpus(self, tmp_path):
        corpus = Path(__file__).resolve().parent.parent / "data" / "corpus"
        out = tmp_path / "capacity"
        argv = ["train", "--corpus-dir", str(corpus), "--out-dir", str(out), "--depth", "2", "--hidden", "32",
                "--heads", "4", "--seq-len", "32", "--mem-len", "32", "--batch", "4", "--epochs", "2",
                "--iters-per-epoch", "100", "--warmup", "20", "--lr-peak", "3e-3", "--dropout", "0.0",
                "--threshold", "1.0", "--quiet"]
        assert dispatch(argv) == 0
        cp = load_checkpoint(out / "checkpoints" / "best.cxlm")
        assert cp.best_val_loss < math.log(cp.model_config.vocab_size) - 1.0
