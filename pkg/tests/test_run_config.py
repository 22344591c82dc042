"""
运行配置测试：解析、逐层覆盖、类型转换与派生路径
"""

from pathlib import Path

import pytest

from define import DEFAULT_RUN_CONFIG, DESK_SCALE_OVERRIDES, create_model_config, create_train_schedule
from errors import ConfigError
from run_config import (extensions_of, format_run_config, load_run_config, parse_config_text, run_paths,
                        save_run_config)


class TestParse:
    """key = value 文本"""

    def test_comments_and_aliases(self):
        values = parse_config_text("# 桌面规模\nseq-len = 128  # 片段长度\n\nhidden=64\n")
        assert values == {"seq_len": "128", "hidden": "64"}

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            parse_config_text("learning_rate = 1\n")

    def test_missing_equals(self):
        with pytest.raises(ConfigError):
            parse_config_text("hidden 64\n")


class TestLoad:
    """默认值 ← 配置文件 ← 命令行"""

    def test_defaults(self):
        config = load_run_config()
        assert config == DEFAULT_RUN_CONFIG
        assert config["clip"] == 0.1 and config["threshold"] == 0.25

    def test_layering(self, tmp_path):
        path = tmp_path / "desk.conf"
        path.write_text("hidden = 128\nseq_len = 128\nlr-peak = 1e-3\n", encoding="utf-8")
        config = load_run_config(str(path), {"hidden": 64, "depth": None, "out-dir": "runs/x"})
        assert config["hidden"] == 64
        assert config["seq_len"] == 128
        assert config["lr_peak"] == 1e-3
        assert config["depth"] == DEFAULT_RUN_CONFIG["depth"]
        assert config["out_dir"] == "runs/x"

    @pytest.mark.parametrize("override", [{"hidden": "abc"}, {"hidden": 1.5}, {"vocab": "word"},
                                          {"precision": "float16"}, {"threshold": 1.5}, {"nope": 1}])
    def test_invalid_values(self, override):
        with pytest.raises(ConfigError):
            load_run_config(None, override)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_run_config(str(tmp_path / "missing.conf"))

    def test_saved_config_loads_back(self, tmp_path):
        config = load_run_config(None, {**DESK_SCALE_OVERRIDES, "vocab": "bpe", "out_dir": str(tmp_path)})
        path = save_run_config(config, tmp_path)
        assert path.name == "run_config.txt"
        assert load_run_config(str(path)) == config

    def test_format_lines(self):
        lines = format_run_config({"seed": 3, "arch": "gru"})
        assert lines == ["# arch = gru", "# seed = 3"]


class TestDerived:
    """派生的模型配置、学习率计划与路径"""

    def test_full_scale_defaults(self):
        config = load_run_config()
        model = create_model_config(config, vocab_size=1000)
        assert (model.hidden, model.depth, model.seq_len, model.mem_len) == (512, 4, 256, 256)
        assert model.ffd_inner == 2048
        sched = create_train_schedule(config)
        assert (sched.warmup_iters, sched.total_iters, sched.epoch_iters) == (5120, 25600, 512)

    def test_extensions(self):
        assert extensions_of({"extensions": ".py, .pyi,,"}) == [".py", ".pyi"]

    def test_paths(self):
        paths = run_paths({"out_dir": "runs/a"})
        assert paths["manifest"].as_posix() == "runs/a/split_manifest.tsv"
        assert paths["best"].as_posix() == "runs/a/checkpoints/best.cxlm"
        assert paths["metrics"].name == "metrics.csv"

    def test_bundled_desk_config(self):
        desk = Path(__file__).resolve().parent.parent / "desk.conf"
        config = load_run_config(str(desk))
        assert {key: config[key] for key in DESK_SCALE_OVERRIDES} == DESK_SCALE_OVERRIDES
        assert create_train_schedule(config).total_iters == 2000
